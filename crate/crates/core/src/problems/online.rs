//! Online stream built on a finite-sum base: `∇f_ξ(x) = ∇f(x) + u_ξ` with
//! `‖u_ξ‖ ≤ σ` (radially clipped isotropic Gaussian, zero mean).

use std::sync::Arc;

use crate::error::Result;
use crate::problem::{Mode, Problem, ProblemExt, Smoothness};
use crate::rng::RngStream;

pub struct OnlineStream {
    base: Arc<dyn Problem>,
    sigma: f64,
    noise_seed: u64,
}

impl OnlineStream {
    pub fn new(base: Arc<dyn Problem>, sigma: f64, noise_seed: u64) -> Self {
        OnlineStream {
            base,
            sigma,
            noise_seed,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Noise `u_ξ` for sample identity `xi`.
    pub fn noise(&self, xi: usize, out: &mut [f64]) {
        if self.sigma == 0.0 {
            out.fill(0.0);
            return;
        }
        let d = self.base.dim();
        let mut rng = RngStream::new(self.noise_seed, xi as u64);
        let per_coord = self.sigma / (d as f64).sqrt();
        for o in out.iter_mut() {
            *o = per_coord * rng.standard_normal();
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > self.sigma {
            let s = self.sigma / norm;
            for o in out.iter_mut() {
                *o *= s;
            }
        }
    }

    fn base_grad(&self, x: &[f64], out: &mut [f64]) {
        self.base
            .full_grad(x, out)
            .expect("online base must expose a full gradient");
    }
}

impl Problem for OnlineStream {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn mode(&self) -> Mode {
        Mode::Online
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            variance_bound: self.sigma,
            ..self.base.smoothness()
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x)
    }

    fn component_grad(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.base_grad(x, out);
        let mut u = vec![0.0; self.dim()];
        self.noise(i, &mut u);
        for (o, n) in out.iter_mut().zip(&u) {
            *o += n;
        }
    }

    fn accumulate_component_grads(&self, indices: &[usize], x: &[f64], weight: f64, out: &mut [f64]) {
        let d = self.dim();
        let mut g = vec![0.0; d];
        self.base_grad(x, &mut g);
        let total = weight * indices.len() as f64;
        for (o, gj) in out.iter_mut().zip(&g) {
            *o += total * gj;
        }
        for &i in indices {
            self.noise(i, &mut g);
            for (o, n) in out.iter_mut().zip(&g) {
                *o += weight * n;
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
        let gx = self.base.grad_at(x).expect("online base must expose a full gradient");
        let gy = self.base.grad_at(y).expect("online base must expose a full gradient");
        let total = weight * indices.len() as f64;
        for ((o, a), b) in out.iter_mut().zip(gx.iter()).zip(gy.iter()) {
            *o += total * (a - b);
        }
    }

    fn population_grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.full_grad(x, out)
    }

    fn hvp(&self, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.hvp(x, v, out)
    }

    fn has_hvp(&self) -> bool {
        self.base.has_hvp()
    }

    fn domain_radius(&self) -> Option<f64> {
        self.base.domain_radius()
    }
}
