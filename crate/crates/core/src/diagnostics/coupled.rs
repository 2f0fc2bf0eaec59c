use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::wilson_interval;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::rng::{sample_uniform_ball, streams, RngStream};
use crate::spectral::{smallest_eigenpair_dense, DEFAULT_DENSE_CAP};
use crate::ssrgd::run_update_steps;
use crate::vector::{axpy, dist, sub, ParamVector};

/// Knobs of the two-point experiment. `None` fields take their defaults from
/// the config: `C₁ = 20/(ηL)`, `r = min(cfg.r, δ/(C₁ρ))` and
/// `𝓣 = 2 ln(8δ√d/(C₁ρζ′r)) / (ηδ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledParams {
    pub pairs: usize,
    pub zeta_prime: f64,
    pub c1: Option<f64>,
    pub radius: Option<f64>,
    pub horizon: Option<u64>,
    /// Refuse to start unless `λ_min(∇²f(x̃)) ≤ −δ`.
    pub require_negative_curvature: bool,
    pub keep_trajectories: bool,
    pub seed: u64,
}

impl Default for CoupledParams {
    fn default() -> Self {
        CoupledParams {
            pairs: 100,
            zeta_prime: 0.1,
            c1: None,
            radius: None,
            horizon: None,
            require_negative_curvature: true,
            keep_trajectories: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub pair: usize,
    /// Empty unless `keep_trajectories` was set.
    pub x_traj: Vec<ParamVector>,
    pub x_prime_traj: Vec<ParamVector>,
    pub w_traj: Vec<ParamVector>,
    pub w0: ParamVector,
    pub r0: f64,
    pub e1: ParamVector,
    /// First `T` with `max(‖x_T − x₀‖, ‖x′_T − x′₀‖) ≥ δ/(C₁ρ)`.
    pub escape_iter: Option<u64>,
    /// Some `t ≤ 𝓣` had `max(f(x₀) − f(x_t), f(x′₀) − f(x′_t)) ≥ 2𝓕`.
    pub f_decrease_escape: bool,
    pub max_distance: f64,
    /// SHA-256 of the index stream each trajectory consumed.
    pub digest: String,
    pub digest_prime: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledReport {
    pub pairs: usize,
    pub horizon: u64,
    pub radius: f64,
    pub r0: f64,
    pub c1: f64,
    pub threshold: f64,
    pub lambda_min: f64,
    pub escapes: usize,
    pub escape_frequency: f64,
    pub escape_ci: (f64, f64),
    pub f_decrease_frequency: f64,
    /// Same criterion for a single unperturbed trajectory from `x̃`.
    pub drift_escape_frequency: f64,
    pub digests_match: bool,
    pub runs: Vec<CoupledRun>,
}

fn hash_indices(h: &mut Sha256, idx: &[usize]) {
    for &i in idx {
        h.update((i as u64).to_le_bytes());
    }
    h.update(u64::MAX.to_le_bytes());
}

/// First index where a trajectory strays `threshold` from its start.
fn first_escape(traj: &[ParamVector], threshold: f64) -> (Option<u64>, f64) {
    let mut max_d = 0.0_f64;
    let mut first = None;
    for (t, x) in traj.iter().enumerate() {
        let d = dist(x, &traj[0]);
        max_d = max_d.max(d);
        if first.is_none() && d >= threshold {
            first = Some(t as u64);
        }
    }
    (first, max_d)
}

/// Two-point coupled-sequence experiment around the saddle `x_tilde`.
///
/// For each pair, `x₀` is drawn from the ball of radius `r` about `x̃` and
/// `x′₀ = x₀ − r₀e₁` with `r₀ = ζ′r/√d` and `e₁` the dense smallest
/// eigenvector of `∇²f(x̃)`. Both run SSRGD update steps for `𝓣` steps on
/// clones of one minibatch stream.
pub fn run_coupled_experiment(
    instance: &ProblemInstance,
    x_tilde: &[f64],
    cfg: &RunConfig,
    params: &CoupledParams,
) -> Result<CoupledReport> {
    let problem = instance.problem.as_ref();
    let d = problem.dim();
    if x_tilde.len() != d {
        return Err(Error::InvalidInput(format!("x_tilde has length {}, expected {d}", x_tilde.len())));
    }
    if params.pairs == 0 || !(params.zeta_prime > 0.0) {
        return Err(Error::InvalidInput("need pairs > 0 and zeta' > 0".into()));
    }
    let s = problem.smoothness();
    let (l, rho, delta, eta) = (s.lipschitz_grad, s.lipschitz_hess, cfg.delta, cfg.eta);
    if !(rho > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidConfig("coupled experiment needs rho > 0 and delta > 0".into()));
    }
    let (lambda_min, e1) = smallest_eigenpair_dense(problem, x_tilde, DEFAULT_DENSE_CAP)?;
    if params.require_negative_curvature && lambda_min > -delta {
        return Err(Error::InvalidInput(format!(
            "x_tilde is not a saddle at this delta: lambda_min = {lambda_min}, need <= {}",
            -delta
        )));
    }
    let c1 = params.c1.unwrap_or(20.0 / (eta * l));
    let threshold = delta / (c1 * rho);
    let radius = params.radius.unwrap_or_else(|| {
        if cfg.perturb_radius > 0.0 {
            cfg.perturb_radius.min(threshold)
        } else {
            threshold
        }
    });
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("perturbation radius must be positive".into()));
    }
    let r0 = params.zeta_prime * radius / (d as f64).sqrt();
    let horizon = params.horizon.unwrap_or_else(|| {
        let arg = 8.0 * delta * (d as f64).sqrt() / (c1 * rho * params.zeta_prime * radius);
        (2.0 * arg.ln().max(1.0) / (eta * delta)).ceil() as u64
    });
    let f_escape = 2.0 * cfg.f_thres;

    let ball_root = RngStream::new(params.seed, streams::PERTURBATION);
    let batch_root = RngStream::new(params.seed, streams::MINIBATCH);
    let mut runs = Vec::with_capacity(params.pairs);
    let mut drift_escapes = 0;
    for pair in 0..params.pairs {
        let mut ball = ball_root.derive(pair as u64);
        let mut x0 = ParamVector::from(x_tilde);
        axpy(1.0, &sample_uniform_ball(&mut ball, d, radius), &mut x0);
        let mut x0p = x0.clone();
        axpy(-r0, &e1, &mut x0p);

        let batches = batch_root.derive(pair as u64);
        let mut h = Sha256::new();
        let traj = run_update_steps(problem, cfg, &x0, horizon, &mut batches.clone(), |idx| {
            hash_indices(&mut h, idx)
        })?;
        let mut hp = Sha256::new();
        let traj_p = run_update_steps(problem, cfg, &x0p, horizon, &mut batches.clone(), |idx| {
            hash_indices(&mut hp, idx)
        })?;
        let drift = run_update_steps(problem, cfg, x_tilde, horizon, &mut batches.clone(), |_| {})?;
        if first_escape(&drift, threshold).0.is_some() {
            drift_escapes += 1;
        }

        let (e_a, d_a) = first_escape(&traj, threshold);
        let (e_b, d_b) = first_escape(&traj_p, threshold);
        let escape_iter = match (e_a, e_b) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let (f0, f0p) = (problem.value(&x0), problem.value(&x0p));
        let f_decrease_escape = traj
            .iter()
            .zip(&traj_p)
            .any(|(x, xp)| (f0 - problem.value(x)).max(f0p - problem.value(xp)) >= f_escape);
        let w0 = sub(&x0, &x0p);
        let (x_traj, x_prime_traj, w_traj) = if params.keep_trajectories {
            let w: Vec<ParamVector> = traj.iter().zip(&traj_p).map(|(a, b)| sub(a, b)).collect();
            (traj, traj_p, w)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        runs.push(CoupledRun {
            pair,
            x_traj,
            x_prime_traj,
            w_traj,
            w0,
            r0,
            e1: e1.clone(),
            escape_iter,
            f_decrease_escape,
            max_distance: d_a.max(d_b),
            digest: hex::encode(h.finalize()),
            digest_prime: hex::encode(hp.finalize()),
        });
    }
    let escapes = runs.iter().filter(|r| r.escape_iter.is_some()).count();
    let n = params.pairs as f64;
    Ok(CoupledReport {
        pairs: params.pairs,
        horizon,
        radius,
        r0,
        c1,
        threshold,
        lambda_min,
        escapes,
        escape_frequency: escapes as f64 / n,
        escape_ci: wilson_interval(escapes, params.pairs),
        f_decrease_frequency: runs.iter().filter(|r| r.f_decrease_escape).count() as f64 / n,
        drift_escape_frequency: drift_escapes as f64 / n,
        digests_match: runs.iter().all(|r| r.digest == r.digest_prime),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_separable_saddle;
    use crate::ssrgd::derive_config_second_order;
    use crate::vector::norm;

    fn setup(delta_plant: f64) -> (ProblemInstance, RunConfig) {
        let inst = make_separable_saddle(6, 8, delta_plant, 0.1, 1).unwrap();
        let cfg = derive_config_second_order(inst.problem.as_ref(), 0.05, 0.3, 1.0).unwrap();
        (inst, cfg)
    }

    #[test]
    fn initial_gap_is_r0_along_e1() {
        let (inst, cfg) = setup(0.3);
        let params = CoupledParams {
            pairs: 5,
            keep_trajectories: true,
            ..CoupledParams::default()
        };
        let rep = run_coupled_experiment(&inst, &[0.0; 6], &cfg, &params).unwrap();
        for r in &rep.runs {
            assert!((norm(&r.w0) - r.r0).abs() <= 1e-12 * r.r0);
            assert_eq!(r.w_traj[0], r.w0);
            let along: f64 = r.w0.iter().zip(r.e1.iter()).map(|(a, b)| a * b).sum();
            assert!((along - r.r0).abs() <= 1e-12 * r.r0);
        }
        assert!(rep.digests_match);
    }

    #[test]
    fn planted_saddle_pairs_escape() {
        let (inst, cfg) = setup(0.3);
        let params = CoupledParams {
            pairs: 20,
            ..CoupledParams::default()
        };
        let rep = run_coupled_experiment(&inst, &[0.0; 6], &cfg, &params).unwrap();
        assert!(rep.escape_frequency >= 0.9, "{}", rep.escape_frequency);
        assert_eq!(rep.drift_escape_frequency, 0.0);
    }

    #[test]
    fn flat_direction_does_not_escape() {
        let (inst, cfg) = setup(0.0);
        let params = CoupledParams {
            pairs: 20,
            require_negative_curvature: false,
            ..CoupledParams::default()
        };
        let rep = run_coupled_experiment(&inst, &[0.0; 6], &cfg, &params).unwrap();
        assert!(rep.escape_frequency < 0.2, "{}", rep.escape_frequency);
    }

    #[test]
    fn non_saddle_rejected() {
        let (inst, cfg) = setup(0.0);
        let err = run_coupled_experiment(&inst, &[0.0; 6], &cfg, &CoupledParams::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
