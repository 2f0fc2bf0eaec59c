//! Oracle contract shared by every optimizer.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{axpy, ParamVector};

/// How component indices are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Mode {
    /// `f = (1/n) Σ f_i`, indices uniform on `0..n`.
    FiniteSum { n: usize },
    /// Expectation objective; every index is a fresh sample identity.
    Online,
}

impl Mode {
    pub fn n(&self) -> Option<usize> {
        match self {
            Mode::FiniteSum { n } => Some(*n),
            Mode::Online => None,
        }
    }
}

/// Smoothness metadata declared by a problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    /// Gradient Lipschitz constant `L` of every component.
    pub lipschitz_grad: f64,
    /// Hessian Lipschitz constant `ρ`.
    pub lipschitz_hess: f64,
    /// Bound `σ` on `‖∇f_i(x) − ∇f(x)‖` (online problems).
    pub variance_bound: f64,
}

/// Oracle bundle for `f`, its components and (optionally) Hessian-vector products.
///
/// Implementations are immutable and must tolerate concurrent calls.
pub trait Problem: Send + Sync {
    fn dim(&self) -> usize;

    fn mode(&self) -> Mode;

    fn smoothness(&self) -> Smoothness;

    /// `f(x)`. Value evaluations are not stochastic-gradient calls.
    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f_i(x)` into `out`.
    fn component_grad(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// `out += weight · Σ_{i ∈ indices} ∇f_i(x)`, summed in slot order.
    fn accumulate_component_grads(&self, indices: &[usize], x: &[f64], weight: f64, out: &mut [f64]) {
        let mut buf = vec![0.0; self.dim()];
        for &i in indices {
            self.component_grad(i, x, &mut buf);
            axpy(weight, &buf, out);
        }
    }

    /// `out += weight · Σ_{i ∈ indices} (∇f_i(x) − ∇f_i(y))`, summed in slot order.
    fn accumulate_component_diffs(
        &self,
        indices: &[usize],
        x: &[f64],
        y: &[f64],
        weight: f64,
        out: &mut [f64],
    ) {
        let d = self.dim();
        let mut gx = vec![0.0; d];
        let mut gy = vec![0.0; d];
        for &i in indices {
            self.component_grad(i, x, &mut gx);
            self.component_grad(i, y, &mut gy);
            for ((o, a), b) in out.iter_mut().zip(&gx).zip(&gy) {
                *o += weight * (a - b);
            }
        }
    }

    /// Exact `∇f(x)` for finite-sum problems.
    fn full_grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self.mode() {
            Mode::FiniteSum { n } => {
                out.fill(0.0);
                let indices: Vec<usize> = (0..n).collect();
                self.accumulate_component_grads(&indices, x, 1.0 / n as f64, out);
                Ok(())
            }
            Mode::Online => Err(Error::UnsupportedOracle("full gradient in online mode")),
        }
    }

    /// Exact `∇f(x)` for monitoring. Online problems expose their population
    /// gradient here; optimizers never call it.
    fn population_grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.full_grad(x, out)
    }

    /// Writes `∇²f(x) v` into `out`.
    fn hvp(&self, _x: &[f64], _v: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::UnsupportedOracle("Hessian-vector product"))
    }

    fn has_hvp(&self) -> bool {
        false
    }

    /// Half-width of the `ℓ∞` box on which the declared constants hold.
    fn domain_radius(&self) -> Option<f64> {
        None
    }
}

/// Convenience wrappers returning owned vectors.
pub trait ProblemExt: Problem {
    fn grad_at(&self, x: &[f64]) -> Result<ParamVector> {
        let mut g = ParamVector::zeros(self.dim());
        self.full_grad(x, &mut g)?;
        Ok(g)
    }

    fn population_grad_at(&self, x: &[f64]) -> Result<ParamVector> {
        let mut g = ParamVector::zeros(self.dim());
        self.population_grad(x, &mut g)?;
        Ok(g)
    }

    fn component_grad_at(&self, i: usize, x: &[f64]) -> ParamVector {
        let mut g = ParamVector::zeros(self.dim());
        self.component_grad(i, x, &mut g);
        g
    }

    fn hvp_at(&self, x: &[f64], v: &[f64]) -> Result<ParamVector> {
        let mut h = ParamVector::zeros(self.dim());
        self.hvp(x, v, &mut h)?;
        Ok(h)
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        match self.domain_radius() {
            Some(r) => x.iter().all(|c| c.abs() <= r),
            None => true,
        }
    }
}

impl<P: Problem + ?Sized> ProblemExt for P {}

/// Stochastic first-order oracle accounting.
///
/// `raw` counts every component-gradient evaluation; `paper` counts a recursive
/// or snapshot minibatch step as `b` instead of `2b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfoCounter {
    pub raw: u64,
    pub paper: u64,
}

impl SfoCounter {
    pub fn add_full(&mut self, n: usize) {
        self.raw += n as u64;
        self.paper += n as u64;
    }

    pub fn add_batch(&mut self, batch: usize) {
        self.add_full(batch)
    }

    /// A step that evaluates each sampled component at two points.
    pub fn add_paired(&mut self, b: usize) {
        self.raw += 2 * b as u64;
        self.paper += b as u64;
    }
}

/// A known saddle point of a synthetic problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub x: ParamVector,
    pub lambda_min: f64,
}

/// A problem plus what is known about it analytically.
#[derive(Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub problem: Arc<dyn Problem>,
    pub known_fstar: Option<f64>,
    pub saddle_points: Vec<SaddlePoint>,
    pub generator_params: BTreeMap<String, serde_json::Value>,
}

impl ProblemInstance {
    pub fn new(name: impl Into<String>, problem: Arc<dyn Problem>) -> Self {
        ProblemInstance {
            name: name.into(),
            problem,
            known_fstar: None,
            saddle_points: Vec::new(),
            generator_params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.generator_params.insert(key.to_string(), value.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }
}

impl std::fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("dim", &self.problem.dim())
            .field("mode", &self.problem.mode())
            .field("known_fstar", &self.known_fstar)
            .field("saddle_points", &self.saddle_points.len())
            .finish()
    }
}
