//! Logistic loss with the nonconvex penalty `α Σ_j x_j² / (1 + x_j²)`.
//!
//! Declared constants, with `s(z) = log(1 + e^{−z})` and `φ(t) = t²/(1+t²)`:
//!
//! * `L = max_i ‖a_i‖² / 4 + 2α` since `0 ≤ s'' ≤ 1/4` and `|φ''| ≤ 2`.
//! * `ρ = max_i ‖a_i‖³ / (6√3) + α · 4.67` since `|s'''| ≤ 1/(6√3)` and
//!   `|φ'''| = |24t(t²−1)/(1+t²)⁴| ≤ 4.6686`.

use crate::error::{Error, Result};
use crate::problem::{Mode, Problem, Smoothness};
use crate::rng::RngStream;

const SOFTPLUS_THIRD: f64 = 0.096_225_044_864_937_63;
const PENALTY_THIRD: f64 = 4.67;

#[derive(Clone, Debug)]
pub struct NonconvexLogistic {
    n: usize,
    d: usize,
    /// Row-major `n × d`.
    features: Vec<f64>,
    /// `±1`.
    labels: Vec<f64>,
    alpha: f64,
    lipschitz_grad: f64,
    lipschitz_hess: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^{-z})` without overflow.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

impl NonconvexLogistic {
    pub fn new(n: usize, d: usize, features: Vec<f64>, labels: Vec<f64>, alpha: f64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidDataset("need at least one sample and one feature".into()));
        }
        if features.len() != n * d || labels.len() != n {
            return Err(Error::InvalidDataset("feature/label shape mismatch".into()));
        }
        if !(alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be nonnegative, got {alpha}")));
        }
        if features.iter().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        let max_norm = features
            .chunks(d)
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0_f64, f64::max);
        Ok(NonconvexLogistic {
            n,
            d,
            features,
            labels,
            alpha,
            lipschitz_grad: max_norm * max_norm / 4.0 + 2.0 * alpha,
            lipschitz_hess: max_norm.powi(3) * SOFTPLUS_THIRD + alpha * PENALTY_THIRD,
        })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        self.labels[i] * self.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }

    fn add_penalty_grad(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        if self.alpha == 0.0 {
            return;
        }
        for (o, &t) in out.iter_mut().zip(x) {
            let q = 1.0 + t * t;
            *o += weight * self.alpha * 2.0 * t / (q * q);
        }
    }

    /// `out += weight · loss'(i) a_i`.
    fn add_loss_grad(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let coef = -self.labels[i] * sigmoid(-self.margin(i, x)) * weight;
        for (o, a) in out.iter_mut().zip(self.row(i)) {
            *o += coef * a;
        }
    }
}

impl Problem for NonconvexLogistic {
    fn dim(&self) -> usize {
        self.d
    }

    fn mode(&self) -> Mode {
        Mode::FiniteSum { n: self.n }
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            lipschitz_grad: self.lipschitz_grad,
            lipschitz_hess: self.lipschitz_hess,
            variance_bound: 0.0,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let loss = (0..self.n)
            .map(|i| softplus_neg(self.margin(i, x)))
            .sum::<f64>()
            / self.n as f64;
        let penalty: f64 = x.iter().map(|t| t * t / (1.0 + t * t)).sum();
        loss + self.alpha * penalty
    }

    fn component_grad(&self, i: usize, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_loss_grad(i, x, 1.0, out);
        self.add_penalty_grad(x, 1.0, out);
    }

    fn accumulate_component_grads(&self, indices: &[usize], x: &[f64], weight: f64, out: &mut [f64]) {
        for &i in indices {
            self.add_loss_grad(i, x, weight, out);
        }
        self.add_penalty_grad(x, weight * indices.len() as f64, out);
    }

    fn accumulate_component_diffs(
        &self,
        indices: &[usize],
        x: &[f64],
        y: &[f64],
        weight: f64,
        out: &mut [f64],
    ) {
        for &i in indices {
            let cx = -self.labels[i] * sigmoid(-self.margin(i, x));
            let cy = -self.labels[i] * sigmoid(-self.margin(i, y));
            let coef = weight * (cx - cy);
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += coef * a;
            }
        }
        let total = weight * indices.len() as f64;
        self.add_penalty_grad(x, total, out);
        self.add_penalty_grad(y, -total, out);
    }

    fn full_grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        let w = 1.0 / self.n as f64;
        for i in 0..self.n {
            self.add_loss_grad(i, x, w, out);
        }
        self.add_penalty_grad(x, 1.0, out);
        Ok(())
    }

    fn hvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        let w = 1.0 / self.n as f64;
        for i in 0..self.n {
            let s = sigmoid(self.margin(i, x));
            let curv = s * (1.0 - s);
            let av: f64 = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
            let coef = w * curv * av;
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += coef * a;
            }
        }
        for ((o, &t), &vj) in out.iter_mut().zip(x).zip(v) {
            let q = 1.0 + t * t;
            *o += self.alpha * (2.0 - 6.0 * t * t) / (q * q * q) * vj;
        }
        Ok(())
    }

    fn has_hvp(&self) -> bool {
        true
    }
}

/// Synthetic binary classification data.
///
/// Features are Gaussian rows scaled to unit norm; labels follow a logistic
/// model around a Gaussian ground-truth direction, so the data are not
/// separable.
pub fn synthetic_logistic(n: usize, d: usize, alpha: f64, seed: u64) -> Result<NonconvexLogistic> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidConfig("logistic problem needs n, d >= 1".into()));
    }
    let mut rng = RngStream::new(seed, 0);
    let truth: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for v in &mut row {
            *v /= norm;
        }
        let z: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
        labels.push(if rng.uniform() < sigmoid(z) { 1.0 } else { -1.0 });
        features.extend(row);
    }
    NonconvexLogistic::new(n, d, features, labels, alpha)
}
