//! Gradient estimators: exact full gradient, online large batch, the
//! recursive (SARAH-style) estimator and the SVRG snapshot estimator.
//!
//! All minibatch sums run in slot order so results are reproducible.

use crate::error::{Error, Result};
use crate::problem::{Mode, Problem, SfoCounter};
use crate::rng::{sample_minibatch, sample_online, RngStream};
use crate::vector::ParamVector;

/// Estimator bookkeeping.
///
/// The recursive estimator uses `prev_x` (the point `v` was formed at); the
/// snapshot estimator uses `anchor` and `anchor_grad`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorState {
    pub v: ParamVector,
    pub anchor: Option<ParamVector>,
    pub anchor_grad: Option<ParamVector>,
    pub prev_x: Option<ParamVector>,
}

impl EstimatorState {
    /// Recursive estimator seeded with `v` formed at `x`.
    pub fn recursive(x: ParamVector, v: ParamVector) -> Self {
        EstimatorState {
            v,
            anchor: None,
            anchor_grad: None,
            prev_x: Some(x),
        }
    }

    /// Snapshot estimator holding `(x̃, ∇f(x̃))`.
    pub fn snapshot(anchor: ParamVector, anchor_grad: ParamVector) -> Self {
        EstimatorState {
            v: anchor_grad.clone(),
            anchor: Some(anchor),
            anchor_grad: Some(anchor_grad),
            prev_x: None,
        }
    }
}

/// Exact `∇f(x) = (1/n) Σ ∇f_i(x)`; costs `n` SFO.
pub fn full_gradient(problem: &dyn Problem, x: &[f64], sfo: &mut SfoCounter) -> Result<ParamVector> {
    let n = match problem.mode() {
        Mode::FiniteSum { n } => n,
        Mode::Online => return Err(Error::UnsupportedOracle("full gradient in online mode")),
    };
    let mut g = ParamVector::zeros(problem.dim());
    problem.full_grad(x, &mut g)?;
    sfo.add_full(n);
    Ok(g)
}

/// `(1/B) Σ_{j ∈ I_B} ∇f_j(x)` with `I_B` drawn i.i.d.; costs `B` SFO.
pub fn large_batch_gradient(
    problem: &dyn Problem,
    x: &[f64],
    batch: usize,
    rng: &mut RngStream,
    sfo: &mut SfoCounter,
) -> Result<ParamVector> {
    if batch == 0 {
        return Err(Error::InvalidConfig("large batch size B must be positive".into()));
    }
    let indices = match problem.mode() {
        Mode::FiniteSum { n } => sample_minibatch(rng, n, batch),
        Mode::Online => sample_online(rng, batch),
    };
    let mut g = ParamVector::zeros(problem.dim());
    problem.accumulate_component_grads(&indices, x, 1.0 / batch as f64, &mut g);
    sfo.add_batch(batch);
    Ok(g)
}

/// Epoch anchor: exact gradient in finite-sum mode, large batch online.
pub fn anchor_gradient(
    problem: &dyn Problem,
    x: &[f64],
    batch: usize,
    rng: &mut RngStream,
    sfo: &mut SfoCounter,
) -> Result<ParamVector> {
    match problem.mode() {
        Mode::FiniteSum { .. } => full_gradient(problem, x, sfo),
        Mode::Online => large_batch_gradient(problem, x, batch, rng, sfo),
    }
}

/// Recursive update `v ← (1/b) Σ_{i ∈ I_b} (∇f_i(x_new) − ∇f_i(prev_x)) + v`.
///
/// The same index multiset is used at both points. Costs `2b` raw SFO.
pub fn recursive_step(
    problem: &dyn Problem,
    state: &mut EstimatorState,
    x_new: &[f64],
    batch: &[usize],
    sfo: &mut SfoCounter,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("minibatch must be nonempty".into()));
    }
    let prev = state
        .prev_x
        .as_mut()
        .ok_or(Error::InvalidState("recursive estimator has no previous point"))?;
    let weight = 1.0 / batch.len() as f64;
    problem.accumulate_component_diffs(batch, x_new, prev, weight, &mut state.v);
    prev.copy_from_slice(x_new);
    sfo.add_paired(batch.len());
    Ok(())
}

/// Snapshot update `v = (1/b) Σ_{i ∈ I_b} (∇f_i(x) − ∇f_i(x̃)) + ∇f(x̃)`.
///
/// Costs `2b` raw SFO.
pub fn svrg_step(
    problem: &dyn Problem,
    state: &EstimatorState,
    x: &[f64],
    batch: &[usize],
    sfo: &mut SfoCounter,
) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("minibatch must be nonempty".into()));
    }
    let (anchor, anchor_grad) = match (&state.anchor, &state.anchor_grad) {
        (Some(a), Some(g)) => (a, g),
        _ => return Err(Error::InvalidState("snapshot estimator has no snapshot")),
    };
    let mut v = anchor_grad.clone();
    problem.accumulate_component_diffs(batch, x, anchor, 1.0 / batch.len() as f64, &mut v);
    sfo.add_paired(batch.len());
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::quadratic::QuadraticSum;
    use crate::rng::seeded_rng;

    fn scalar_quadratics() -> QuadraticSum {
        // f_i(x) = ½ a_i x², a = (1, 2, 3)
        QuadraticSum::diagonal_scalar(&[1.0, 2.0, 3.0])
    }

    #[test]
    fn full_gradient_scalar() {
        let p = scalar_quadratics();
        let mut sfo = SfoCounter::default();
        let g = full_gradient(&p, &[2.0], &mut sfo).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-15);
        assert_eq!(sfo.raw, 3);
    }

    #[test]
    fn full_gradient_at_common_stationary_point() {
        let p = scalar_quadratics();
        let g = full_gradient(&p, &[0.0], &mut SfoCounter::default()).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn full_gradient_matches_direct_sum() {
        let p = QuadraticSum::random(4, 3, 11);
        let x = [0.3, -1.2, 0.7];
        let g = full_gradient(&p, &x, &mut SfoCounter::default()).unwrap();
        let mut expect = [0.0; 3];
        for i in 0..4 {
            let gi = p.component_grad_direct(i, &x);
            for k in 0..3 {
                expect[k] += gi[k] / 4.0;
            }
        }
        for k in 0..3 {
            assert!((g[k] - expect[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn recursive_step_hand_arithmetic() {
        let p = scalar_quadratics();
        let mut st = EstimatorState::recursive(vec![1.0].into(), vec![2.0].into());
        let mut sfo = SfoCounter::default();
        // indices 2 and 3 in 1-based notation
        recursive_step(&p, &mut st, &[0.5], &[1, 2], &mut sfo).unwrap();
        assert!((st.v[0] - 0.75).abs() < 1e-15);
        assert_eq!(st.prev_x.as_ref().unwrap()[0], 0.5);
        assert_eq!(sfo.raw, 4);
        assert_eq!(sfo.paper, 2);
    }

    #[test]
    fn recursive_step_zero_displacement() {
        let p = QuadraticSum::random(3, 2, 5);
        let x: ParamVector = vec![0.4, -0.2].into();
        let mut st = EstimatorState::recursive(x.clone(), vec![1.5, -2.5].into());
        recursive_step(&p, &mut st, &x, &[0, 2, 2], &mut SfoCounter::default()).unwrap();
        assert_eq!(st.v.as_slice(), &[1.5, -2.5]);
    }

    #[test]
    fn recursive_step_full_cover_telescopes() {
        let p = QuadraticSum::random(4, 3, 9);
        let x0: ParamVector = vec![0.1, 0.2, -0.3].into();
        let x1 = [1.0, -0.5, 0.25];
        let g0 = full_gradient(&p, &x0, &mut SfoCounter::default()).unwrap();
        let mut st = EstimatorState::recursive(x0, g0);
        recursive_step(&p, &mut st, &x1, &[0, 1, 2, 3], &mut SfoCounter::default()).unwrap();
        let g1 = full_gradient(&p, &x1, &mut SfoCounter::default()).unwrap();
        for k in 0..3 {
            assert!((st.v[k] - g1[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn recursive_step_rejects_empty_batch() {
        let p = scalar_quadratics();
        let mut st = EstimatorState::recursive(vec![1.0].into(), vec![2.0].into());
        let err = recursive_step(&p, &mut st, &[0.5], &[], &mut SfoCounter::default());
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn svrg_step_hand_arithmetic() {
        let p = scalar_quadratics();
        let st = EstimatorState::snapshot(vec![1.0].into(), vec![2.0].into());
        let v = svrg_step(&p, &st, &[2.0], &[0, 0], &mut SfoCounter::default()).unwrap();
        assert!((v[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn svrg_step_at_snapshot_returns_anchor_gradient() {
        let p = QuadraticSum::random(3, 2, 1);
        let anchor: ParamVector = vec![0.3, 0.3].into();
        let g = full_gradient(&p, &anchor, &mut SfoCounter::default()).unwrap();
        let st = EstimatorState::snapshot(anchor.clone(), g.clone());
        let v = svrg_step(&p, &st, &anchor, &[1, 2], &mut SfoCounter::default()).unwrap();
        assert_eq!(v, g);
    }

    #[test]
    fn svrg_step_full_cover_is_exact() {
        let p = QuadraticSum::random(3, 2, 2);
        let anchor: ParamVector = vec![0.3, -0.3].into();
        let g = full_gradient(&p, &anchor, &mut SfoCounter::default()).unwrap();
        let st = EstimatorState::snapshot(anchor, g);
        let x = [1.1, 0.9];
        let v = svrg_step(&p, &st, &x, &[0, 1, 2], &mut SfoCounter::default()).unwrap();
        let gx = full_gradient(&p, &x, &mut SfoCounter::default()).unwrap();
        for k in 0..2 {
            assert!((v[k] - gx[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn svrg_step_without_snapshot_errors() {
        let p = scalar_quadratics();
        let st = EstimatorState::recursive(vec![1.0].into(), vec![2.0].into());
        let err = svrg_step(&p, &st, &[2.0], &[0], &mut SfoCounter::default());
        assert!(matches!(err, Err(Error::InvalidState(_))));
    }

    #[test]
    fn large_batch_of_one_is_a_component_gradient() {
        let p = scalar_quadratics();
        let mut rng = seeded_rng(3, 0);
        let mut replay = rng.clone();
        let v = large_batch_gradient(&p, &[1.0], 1, &mut rng, &mut SfoCounter::default()).unwrap();
        let i = sample_minibatch(&mut replay, 3, 1)[0];
        assert_eq!(v[0], (i + 1) as f64);
    }

    #[test]
    fn large_batch_zero_is_invalid() {
        let p = scalar_quadratics();
        let mut rng = seeded_rng(3, 0);
        let err = large_batch_gradient(&p, &[1.0], 0, &mut rng, &mut SfoCounter::default());
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn full_gradient_unsupported_online() {
        let base = crate::problems::make_separable_saddle(2, 4, 0.5, 0.0, 1).unwrap();
        let online = crate::problems::make_online_stream(&base, 1.0, 1).unwrap();
        let err = full_gradient(online.problem.as_ref(), &[0.0, 0.0], &mut SfoCounter::default());
        assert!(matches!(err, Err(Error::UnsupportedOracle(_))));
    }
}
