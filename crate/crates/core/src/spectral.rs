//! Second-order stationarity checks from Hessian-vector products.
//!
//! Two routes to `λ_min(∇²f(x))`: a dense eigensolve of the Hessian assembled
//! column by column (small `d`), and power iteration on the shifted matrix
//! `L·I − ∇²f(x)`, which is PSD whenever `‖∇²f(x)‖ ≤ L`.
//!
//! Neither route is used inside the optimizers.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::rng::{streams, RngStream};
use crate::ssrgd::Certifier;
use crate::vector::{dot, norm, ParamVector};

pub const DEFAULT_DENSE_CAP: usize = 200;
pub const DEFAULT_POWER_ITERS: usize = 1000;

/// Failure probability behind the power-method slack.
pub const POWER_FAILURE_PROB: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    ShiftedPower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub grad_norm: f64,
    pub lambda_min_est: f64,
    /// Width of the one-sided interval `[est − slack, est]` holding the true
    /// `λ_min` (zero for the dense method).
    pub lambda_min_ci: f64,
    pub is_fosp: bool,
    pub is_sosp: bool,
    pub method: Method,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEstimate {
    pub estimate: f64,
    pub slack: f64,
}

fn assemble_hessian(problem: &dyn Problem, x: &[f64]) -> Result<DMatrix<f64>> {
    let d = problem.dim();
    let mut h = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    let mut col = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        problem.hvp(x, &e, &mut col)?;
        e[j] = 0.0;
        for i in 0..d {
            h[(i, j)] = col[i];
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Smallest eigenvalue and a unit eigenvector of the symmetrized Hessian.
pub fn smallest_eigenpair_dense(
    problem: &dyn Problem,
    x: &[f64],
    dense_cap: usize,
) -> Result<(f64, ParamVector)> {
    let d = problem.dim();
    if d > dense_cap {
        return Err(Error::DenseCapExceeded { d, cap: dense_cap });
    }
    let h = assemble_hessian(problem, x)?;
    let eig = SymmetricEigen::new(h);
    let (k, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("dimension is positive");
    let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    Ok((lambda, v.into()))
}

/// `λ_min(∇²f(x))` by dense eigendecomposition; refuses `d > dense_cap`.
pub fn lambda_min_dense(problem: &dyn Problem, x: &[f64], dense_cap: usize) -> Result<f64> {
    smallest_eigenpair_dense(problem, x, dense_cap).map(|(l, _)| l)
}

/// Slack factor `ε` such that the Rayleigh quotient after `iters` power steps
/// from a Gaussian start is at least `(1 − ε)` times the top eigenvalue with
/// probability `1 − p`: `ε = ln(1.648 √d / p) / (iters − ½)`.
pub fn power_relative_error(d: usize, iters: usize, failure_prob: f64) -> f64 {
    let k = iters as f64 - 0.5;
    if k <= 0.0 {
        return 1.0;
    }
    ((1.648 * (d as f64).sqrt() / failure_prob).ln() / k).min(1.0)
}

/// Power iteration on `L·I − ∇²f(x)`.
///
/// The Rayleigh quotient never exceeds the top eigenvalue of the shifted
/// matrix, so `estimate` is an upper bound on `λ_min` and the true value lies
/// in `[estimate − slack, estimate]` with probability `1 − POWER_FAILURE_PROB`.
pub fn lambda_min_power(
    problem: &dyn Problem,
    x: &[f64],
    lipschitz: f64,
    iters: usize,
    rng: &mut RngStream,
) -> Result<PowerEstimate> {
    if !problem.has_hvp() {
        return Err(Error::UnsupportedOracle("Hessian-vector product"));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidInput(format!("spectral bound must be positive, got {lipschitz}")));
    }
    let d = problem.dim();
    let iters = iters.max(1);
    let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|c| *c /= nv);
    let mut hv = vec![0.0; d];
    let mut mv = vec![0.0; d];
    let mut rayleigh = 0.0;
    for _ in 0..iters {
        problem.hvp(x, &v, &mut hv)?;
        for ((m, &vi), &hi) in mv.iter_mut().zip(&v).zip(&hv) {
            *m = lipschitz * vi - hi;
        }
        rayleigh = dot(&v, &mv);
        let nm = norm(&mv);
        if nm == 0.0 || !nm.is_finite() {
            break;
        }
        for (vi, &mi) in v.iter_mut().zip(&mv) {
            *vi = mi / nm;
        }
    }
    let top = rayleigh.max(0.0);
    let eps = power_relative_error(d, iters, POWER_FAILURE_PROB);
    let slack = if eps >= 1.0 {
        2.0 * lipschitz
    } else {
        top * eps / (1.0 - eps)
    };
    Ok(PowerEstimate {
        estimate: lipschitz - top,
        slack,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyOptions {
    pub dense_cap: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            dense_cap: DEFAULT_DENSE_CAP,
            power_iters: DEFAULT_POWER_ITERS,
            seed: 0,
        }
    }
}

/// `(ε, δ)` verdict at `x`.
///
/// The gradient is the exact (population, in online mode) gradient. With the
/// power method the curvature clause uses the lower end of the interval.
pub fn certify(problem: &dyn Problem, x: &[f64], eps: f64, delta: f64) -> Result<Certificate> {
    certify_with(problem, x, eps, delta, &CertifyOptions::default())
}

pub fn certify_with(
    problem: &dyn Problem,
    x: &[f64],
    eps: f64,
    delta: f64,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let mut g = vec![0.0; problem.dim()];
    problem.population_grad(x, &mut g)?;
    let grad_norm = norm(&g);
    let (lambda, slack, method) = if problem.dim() <= opts.dense_cap {
        (lambda_min_dense(problem, x, opts.dense_cap)?, 0.0, Method::Dense)
    } else {
        let mut rng = RngStream::new(opts.seed, streams::CERTIFY);
        let l = problem.smoothness().lipschitz_grad;
        let est = lambda_min_power(problem, x, l, opts.power_iters, &mut rng)?;
        (est.estimate, est.slack, Method::ShiftedPower)
    };
    let is_fosp = grad_norm <= eps;
    Ok(Certificate {
        grad_norm,
        lambda_min_est: lambda,
        lambda_min_ci: slack,
        is_fosp,
        is_sosp: is_fosp && lambda - slack >= -delta,
        method,
    })
}

/// [`Certifier`] backed by [`certify_with`].
#[derive(Clone, Copy, Debug)]
pub struct SospCertifier {
    pub eps: f64,
    pub delta: f64,
    pub options: CertifyOptions,
}

impl SospCertifier {
    pub fn new(eps: f64, delta: f64) -> Self {
        SospCertifier {
            eps,
            delta,
            options: CertifyOptions::default(),
        }
    }
}

impl Certifier for SospCertifier {
    fn is_sosp(&self, problem: &dyn Problem, x: &[f64]) -> Result<bool> {
        certify_with(problem, x, self.eps, self.delta, &self.options).map(|c| c.is_sosp)
    }
}
