//! Separable quartic with a planted strict saddle at the origin.
//!
//! `f(x) = ½ Σ_{j<d-1} x_j² − (δ/2) x_{d-1}² + (γ/4) Σ_j x_j⁴`, split into `n`
//! components `f_i(x) = f(x) + c_iᵀx` with `Σ_i c_i = 0`. The linear terms
//! cancel in every gradient difference, so the component variance is tunable
//! without affecting `∇f`.

use crate::error::{Error, Result};
use crate::problem::{Mode, Problem, Smoothness};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct SaddleParams {
    pub d: usize,
    pub n: usize,
    /// Negative curvature `δ_plant` at the origin.
    pub delta: f64,
    /// Quartic coefficient `γ₄`.
    pub quartic: f64,
    /// Half-width `R` of the box on which `L` and `ρ` are declared.
    pub box_radius: f64,
    /// Standard deviation of the zero-mean linear terms.
    pub noise: f64,
    pub seed: u64,
}

impl SaddleParams {
    pub fn new(d: usize, n: usize, delta: f64) -> Self {
        SaddleParams {
            d,
            n,
            delta,
            quartic: 1.0,
            box_radius: 1.5,
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeparableSaddle {
    params: SaddleParams,
    /// Row-major `n × d`, rows sum to zero.
    shifts: Vec<f64>,
}

impl SeparableSaddle {
    pub fn new(params: SaddleParams) -> Result<Self> {
        if params.d < 2 {
            return Err(Error::InvalidConfig("planted saddle needs d >= 2".into()));
        }
        if params.n < 1 {
            return Err(Error::InvalidConfig("planted saddle needs n >= 1".into()));
        }
        if !(params.delta >= 0.0) || !params.delta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "delta_plant must be nonnegative, got {}",
                params.delta
            )));
        }
        if !(params.quartic > 0.0) || !(params.box_radius > 0.0) || !(params.noise >= 0.0) {
            return Err(Error::InvalidConfig(
                "quartic, box radius must be positive and noise nonnegative".into(),
            ));
        }
        let (n, d) = (params.n, params.d);
        let mut rng = RngStream::new(params.seed, 0);
        let mut shifts: Vec<f64> = (0..n * d)
            .map(|_| params.noise * rng.standard_normal())
            .collect();
        for j in 0..d {
            let mean = (0..n).map(|i| shifts[i * d + j]).sum::<f64>() / n as f64;
            for i in 0..n {
                shifts[i * d + j] -= mean;
            }
        }
        Ok(SeparableSaddle { params, shifts })
    }

    pub fn params(&self) -> &SaddleParams {
        &self.params
    }

    fn curvature(&self, j: usize) -> f64 {
        if j + 1 == self.params.d {
            -self.params.delta
        } else {
            1.0
        }
    }

    fn exact_grad(&self, x: &[f64], out: &mut [f64]) {
        let g = self.params.quartic;
        for (j, (o, &xj)) in out.iter_mut().zip(x).enumerate() {
            *o = self.curvature(j) * xj + g * xj * xj * xj;
        }
    }

    /// Global minimizers `(0, …, 0, ±√(δ/γ₄))`.
    pub fn minimizers(&self) -> [Vec<f64>; 2] {
        let d = self.params.d;
        let t = (self.params.delta / self.params.quartic).sqrt();
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        plus[d - 1] = t;
        minus[d - 1] = -t;
        [plus, minus]
    }

    /// `f* = −δ² / (4γ₄)`.
    pub fn fstar(&self) -> f64 {
        -self.params.delta * self.params.delta / (4.0 * self.params.quartic)
    }
}

impl Problem for SeparableSaddle {
    fn dim(&self) -> usize {
        self.params.d
    }

    fn mode(&self) -> Mode {
        Mode::FiniteSum { n: self.params.n }
    }

    /// On `‖x‖_∞ ≤ R` the Hessian is `diag(c_j + 3γ₄x_j²)` with `c_j ∈ {1, −δ}`,
    /// so `‖∇²f‖ ≤ max(1 + 3γ₄R², δ)`. Its variation is `3γ₄ |x_j² − y_j²| ≤
    /// 6γ₄R |x_j − y_j|`; `ρ` carries an extra `√d` as a loose upper bound.
    fn smoothness(&self) -> Smoothness {
        let p = &self.params;
        let r = p.box_radius;
        Smoothness {
            lipschitz_grad: (1.0 + 3.0 * p.quartic * r * r).max(p.delta),
            lipschitz_hess: 6.0 * p.quartic * r * (p.d as f64).sqrt(),
            variance_bound: 0.0,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let g = self.params.quartic;
        x.iter()
            .enumerate()
            .map(|(j, &xj)| {
                let sq = xj * xj;
                0.5 * self.curvature(j) * sq + 0.25 * g * sq * sq
            })
            .sum()
    }

    fn component_grad(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.exact_grad(x, out);
        let d = self.params.d;
        for (o, c) in out.iter_mut().zip(&self.shifts[i * d..(i + 1) * d]) {
            *o += c;
        }
    }

    fn accumulate_component_grads(&self, indices: &[usize], x: &[f64], weight: f64, out: &mut [f64]) {
        let d = self.params.d;
        let mut g = vec![0.0; d];
        self.exact_grad(x, &mut g);
        let total = weight * indices.len() as f64;
        for (o, gj) in out.iter_mut().zip(&g) {
            *o += total * gj;
        }
        for &i in indices {
            for (o, c) in out.iter_mut().zip(&self.shifts[i * d..(i + 1) * d]) {
                *o += weight * c;
            }
        }
    }

    fn accumulate_component_diffs(
        &self,
        indices: &[usize],
        x: &[f64],
        y: &[f64],
        weight: f64,
        out: &mut [f64],
    ) {
        let d = self.params.d;
        let mut gx = vec![0.0; d];
        let mut gy = vec![0.0; d];
        self.exact_grad(x, &mut gx);
        self.exact_grad(y, &mut gy);
        let total = weight * indices.len() as f64;
        for ((o, a), b) in out.iter_mut().zip(&gx).zip(&gy) {
            *o += total * (a - b);
        }
    }

    fn full_grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.exact_grad(x, out);
        Ok(())
    }

    fn hvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let g = self.params.quartic;
        for (j, ((o, &xj), &vj)) in out.iter_mut().zip(x).zip(v).enumerate() {
            *o = (self.curvature(j) + 3.0 * g * xj * xj) * vj;
        }
        Ok(())
    }

    fn has_hvp(&self) -> bool {
        true
    }

    fn domain_radius(&self) -> Option<f64> {
        Some(self.params.box_radius)
    }
}
