use serde::{Deserialize, Serialize};

use super::{Welford, SE_SLACK};
use crate::error::{Error, Result};
use crate::problem::{Mode, Problem};
use crate::rng::{sample_minibatch, RngStream};
use crate::vector::{dist_sq, norm, ParamVector};

/// Largest number of index tuples the exhaustive mode will walk.
pub const ENUMERATION_CAP: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Recursive,
    Snapshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    MonteCarlo,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint {
    pub t: usize,
    /// Estimate of `E‖v_t − ∇f(x_t)‖²`.
    pub estimate: f64,
    /// `(L²/b) Σ_{j ≤ t} ‖x_j − x_{j−1}‖²`.
    pub bound: f64,
    pub std_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub method: VarianceMethod,
    pub minibatch: usize,
    pub replications: usize,
    pub points: Vec<VariancePoint>,
    pub all_pass: bool,
}

/// Exact first and second moments of an estimator at one trajectory point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub t: usize,
    /// `‖E[v_t] − ∇f(x_t)‖`.
    pub bias: f64,
    /// `E‖v_t − ∇f(x_t)‖²`.
    pub second_moment: f64,
    pub bound: f64,
}

fn finite_sum_n(problem: &dyn Problem) -> Result<usize> {
    match problem.mode() {
        Mode::FiniteSum { n } => Ok(n),
        Mode::Online => Err(Error::UnsupportedOracle("variance check needs a finite sum")),
    }
}

fn check_inputs(problem: &dyn Problem, trajectory: &[ParamVector], b: usize) -> Result<usize> {
    let n = finite_sum_n(problem)?;
    if trajectory.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "trajectory needs at least 2 points, got {}",
            trajectory.len()
        )));
    }
    if b == 0 {
        return Err(Error::InvalidInput("minibatch must be positive".into()));
    }
    if let Some(bad) = trajectory.iter().find(|x| x.dim() != problem.dim()) {
        return Err(Error::InvalidInput(format!(
            "trajectory point has dimension {}, expected {}",
            bad.dim(),
            problem.dim()
        )));
    }
    Ok(n)
}

fn full_grads(problem: &dyn Problem, trajectory: &[ParamVector]) -> Result<Vec<ParamVector>> {
    trajectory
        .iter()
        .map(|x| {
            let mut g = ParamVector::zeros(x.dim());
            problem.full_grad(x, &mut g)?;
            Ok(g)
        })
        .collect()
}

fn bounds(problem: &dyn Problem, trajectory: &[ParamVector], b: usize, kind: EstimatorKind) -> Vec<f64> {
    let l = problem.smoothness().lipschitz_grad;
    let c = l * l / b as f64;
    let mut acc = 0.0;
    (0..trajectory.len())
        .map(|t| match kind {
            EstimatorKind::Recursive => {
                if t > 0 {
                    acc += dist_sq(&trajectory[t], &trajectory[t - 1]);
                }
                c * acc
            }
            EstimatorKind::Snapshot => c * dist_sq(&trajectory[t], &trajectory[0]),
        })
        .collect()
}

/// Replays the estimator along `trajectory` for one choice of index tuples.
/// `batches[t − 1]` is the minibatch used at step `t`.
fn replay(
    problem: &dyn Problem,
    trajectory: &[ParamVector],
    anchor_grad: &[f64],
    batches: &[&[usize]],
    kind: EstimatorKind,
    mut visit: impl FnMut(usize, &[f64]),
) {
    let mut v = ParamVector::from(anchor_grad);
    for t in 1..trajectory.len() {
        let batch = batches[t - 1];
        let w = 1.0 / batch.len() as f64;
        match kind {
            EstimatorKind::Recursive => {
                problem.accumulate_component_diffs(batch, &trajectory[t], &trajectory[t - 1], w, &mut v)
            }
            EstimatorKind::Snapshot => {
                v.copy_from_slice(anchor_grad);
                problem.accumulate_component_diffs(batch, &trajectory[t], &trajectory[0], w, &mut v)
            }
        }
        visit(t, &v);
    }
}

/// Exact moments of the estimator along a fixed trajectory, by walking all
/// `n^(b·(T−1))` equally likely index tuples. `trajectory[0]` is the anchor.
pub fn enumerate_estimator_moments(
    problem: &dyn Problem,
    trajectory: &[ParamVector],
    b: usize,
    kind: EstimatorKind,
) -> Result<Vec<Moment>> {
    let n = check_inputs(problem, trajectory, b)?;
    let steps = trajectory.len() - 1;
    let slots = (b * steps) as u32;
    let total = (n as u64)
        .checked_pow(slots)
        .filter(|&c| c <= ENUMERATION_CAP)
        .ok_or_else(|| Error::InvalidInput(format!("{n}^{slots} index tuples exceed the enumeration cap")))?;
    let grads = full_grads(problem, trajectory)?;
    let d = problem.dim();
    let mut mean = vec![vec![0.0; d]; trajectory.len()];
    let mut second = vec![0.0; trajectory.len()];
    let p = 1.0 / total as f64;
    let mut digits = vec![0usize; slots as usize];
    for code in 0..total {
        let mut c = code;
        for slot in digits.iter_mut() {
            *slot = (c % n as u64) as usize;
            c /= n as u64;
        }
        let batches: Vec<&[usize]> = digits.chunks(b).collect();
        replay(problem, trajectory, &grads[0], &batches, kind, |t, v| {
            for (m, &vi) in mean[t].iter_mut().zip(v) {
                *m += p * vi;
            }
            second[t] += p * dist_sq(v, &grads[t]);
        });
    }
    let bound = bounds(problem, trajectory, b, kind);
    Ok((0..trajectory.len())
        .map(|t| {
            let bias = if t == 0 {
                0.0
            } else {
                let diff: Vec<f64> = mean[t].iter().zip(grads[t].iter()).map(|(a, g)| a - g).collect();
                norm(&diff)
            };
            Moment {
                t,
                bias,
                second_moment: second[t],
                bound: bound[t],
            }
        })
        .collect())
}

/// Checks `E‖v_t − ∇f(x_t)‖² ≤ (L²/b) Σ_{j≤t} ‖x_j − x_{j−1}‖²` for the
/// recursive estimator along a fixed trajectory that starts at an anchor.
///
/// With `replications == 0` the expectation is computed exactly by
/// enumeration instead of sampled.
pub fn verify_variance_bound(
    problem: &dyn Problem,
    trajectory: &[ParamVector],
    b: usize,
    replications: usize,
    rng: &mut RngStream,
) -> Result<VarianceReport> {
    let n = check_inputs(problem, trajectory, b)?;
    if replications == 0 {
        let moments = enumerate_estimator_moments(problem, trajectory, b, EstimatorKind::Recursive)?;
        let points: Vec<VariancePoint> = moments
            .into_iter()
            .map(|m| VariancePoint {
                t: m.t,
                estimate: m.second_moment,
                bound: m.bound,
                std_err: 0.0,
                pass: m.second_moment <= m.bound + 1e-12 * (1.0 + m.bound),
            })
            .collect();
        return Ok(VarianceReport {
            method: VarianceMethod::Exhaustive,
            minibatch: b,
            replications: 0,
            all_pass: points.iter().all(|p| p.pass),
            points,
        });
    }
    let grads = full_grads(problem, trajectory)?;
    let mut stats = vec![Welford::default(); trajectory.len()];
    let steps = trajectory.len() - 1;
    for _ in 0..replications {
        let draws: Vec<Vec<usize>> = (0..steps).map(|_| sample_minibatch(rng, n, b)).collect();
        let batches: Vec<&[usize]> = draws.iter().map(|v| v.as_slice()).collect();
        replay(problem, trajectory, &grads[0], &batches, EstimatorKind::Recursive, |t, v| {
            stats[t].push(dist_sq(v, &grads[t]));
        });
    }
    stats[0].push(0.0);
    let bound = bounds(problem, trajectory, b, EstimatorKind::Recursive);
    let points: Vec<VariancePoint> = (0..trajectory.len())
        .map(|t| {
            let (estimate, std_err) = (stats[t].mean(), stats[t].std_err());
            VariancePoint {
                t,
                estimate,
                bound: bound[t],
                std_err,
                pass: estimate <= bound[t] + SE_SLACK * std_err + 1e-12 * (1.0 + bound[t]),
            }
        })
        .collect();
    Ok(VarianceReport {
        method: VarianceMethod::MonteCarlo,
        minibatch: b,
        replications,
        all_pass: points.iter().all(|p| p.pass),
        points,
    })
}
