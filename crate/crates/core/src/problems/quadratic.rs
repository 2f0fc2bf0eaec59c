//! Sum of quadratics `f_i(x) = ½ xᵀA_i x + b_iᵀx`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::problem::{Mode, Problem, Smoothness};
use crate::rng::RngStream;

#[derive(Clone, Debug)]
pub struct QuadraticSum {
    d: usize,
    /// Row-major `d × d` blocks, one per component.
    mats: Vec<Vec<f64>>,
    offsets: Vec<Vec<f64>>,
    mean_mat: Vec<f64>,
    mean_offset: Vec<f64>,
    lipschitz: f64,
}

fn spectral_norm(d: usize, m: &[f64]) -> f64 {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, m));
    eig.eigenvalues.iter().fold(0.0_f64, |acc, e| acc.max(e.abs()))
}

fn matvec(d: usize, m: &[f64], x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate().take(d) {
        *o = m[r * d..(r + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

impl QuadraticSum {
    /// Builds from symmetric row-major matrices and linear terms.
    pub fn new(d: usize, mats: Vec<Vec<f64>>, offsets: Vec<Vec<f64>>) -> Result<Self> {
        if mats.is_empty() || mats.len() != offsets.len() {
            return Err(Error::InvalidConfig(
                "need one matrix and one offset per component".into(),
            ));
        }
        for (m, b) in mats.iter().zip(&offsets) {
            if m.len() != d * d || b.len() != d {
                return Err(Error::InvalidConfig("component shape mismatch".into()));
            }
            for r in 0..d {
                for c in 0..r {
                    if (m[r * d + c] - m[c * d + r]).abs() > 1e-12 {
                        return Err(Error::InvalidConfig("component matrix not symmetric".into()));
                    }
                }
            }
        }
        let n = mats.len() as f64;
        let mut mean_mat = vec![0.0; d * d];
        let mut mean_offset = vec![0.0; d];
        for (m, b) in mats.iter().zip(&offsets) {
            for (acc, v) in mean_mat.iter_mut().zip(m) {
                *acc += v / n;
            }
            for (acc, v) in mean_offset.iter_mut().zip(b) {
                *acc += v / n;
            }
        }
        let lipschitz = mats
            .iter()
            .map(|m| spectral_norm(d, m))
            .fold(0.0_f64, f64::max);
        Ok(QuadraticSum {
            d,
            mats,
            offsets,
            mean_mat,
            mean_offset,
            lipschitz,
        })
    }

    /// One-dimensional `f_i(x) = ½ a_i x²`.
    pub fn diagonal_scalar(a: &[f64]) -> Self {
        let mats = a.iter().map(|&ai| vec![ai]).collect();
        let offsets = a.iter().map(|_| vec![0.0]).collect();
        Self::new(1, mats, offsets).expect("scalar quadratics are well-formed")
    }

    /// `n` copies of `½‖x‖²`.
    pub fn isotropic(n: usize, d: usize) -> Self {
        let mut eye = vec![0.0; d * d];
        for k in 0..d {
            eye[k * d + k] = 1.0;
        }
        Self::new(d, vec![eye; n], vec![vec![0.0; d]; n]).expect("identity is well-formed")
    }

    /// Random symmetric components with Gaussian entries.
    pub fn random(n: usize, d: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, 0);
        let scale = 1.0 / (d as f64).sqrt();
        let mut mats = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for _ in 0..n {
            let mut m = vec![0.0; d * d];
            for r in 0..d {
                for c in 0..=r {
                    let v = rng.standard_normal() * scale;
                    m[r * d + c] = v;
                    m[c * d + r] = v;
                }
            }
            mats.push(m);
            offsets.push((0..d).map(|_| rng.standard_normal()).collect());
        }
        Self::new(d, mats, offsets).expect("random quadratics are well-formed")
    }

    pub fn n(&self) -> usize {
        self.mats.len()
    }

    /// Averaged Hessian, row-major.
    pub fn hessian(&self) -> &[f64] {
        &self.mean_mat
    }

    /// `A_i x + b_i` computed from the stored blocks.
    pub fn component_grad_direct(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.component_grad(i, x, &mut out);
        out
    }
}

impl Problem for QuadraticSum {
    fn dim(&self) -> usize {
        self.d
    }

    fn mode(&self) -> Mode {
        Mode::FiniteSum {
            n: self.mats.len(),
        }
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness {
            lipschitz_grad: self.lipschitz,
            lipschitz_hess: 0.0,
            variance_bound: 0.0,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.d];
        matvec(self.d, &self.mean_mat, x, &mut ax);
        let quad: f64 = ax.iter().zip(x).map(|(a, b)| a * b).sum();
        let lin: f64 = self.mean_offset.iter().zip(x).map(|(a, b)| a * b).sum();
        0.5 * quad + lin
    }

    fn component_grad(&self, i: usize, x: &[f64], out: &mut [f64]) {
        matvec(self.d, &self.mats[i], x, out);
        for (o, b) in out.iter_mut().zip(&self.offsets[i]) {
            *o += b;
        }
    }

    fn full_grad(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        matvec(self.d, &self.mean_mat, x, out);
        for (o, b) in out.iter_mut().zip(&self.mean_offset) {
            *o += b;
        }
        Ok(())
    }

    fn hvp(&self, _x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        matvec(self.d, &self.mean_mat, v, out);
        Ok(())
    }

    fn has_hvp(&self) -> bool {
        true
    }
}
