use serde::{Deserialize, Serialize};

use super::{Welford, SE_SLACK};
use crate::config::{RunConfig, GOLDEN_STEP};
use crate::error::{Error, Result};
use crate::estimators::{recursive_step, svrg_step, EstimatorState};
use crate::problem::{Mode, Problem, SfoCounter};
use crate::rng::{sample_minibatch, RngStream};
use crate::vector::{axpy, norm_sq, ParamVector};

/// Per-epoch Monte Carlo summary of
/// `slack = f(x_sm) − (η/2) Σ ‖∇f(x_{j−1})‖² − f(x_{(s+1)m})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub mean_f_start: f64,
    pub mean_f_end: f64,
    /// `(η/2) E Σ ‖∇f(x_{j−1})‖²`.
    pub mean_required_decrease: f64,
    pub mean_slack: f64,
    pub std_err: f64,
    /// `mean_slack ≥ −3·se`.
    pub pass: bool,
}

/// SVRG run with the same step size at `b = m` and `b = m²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrgContrast {
    pub b_small: usize,
    pub b_large: usize,
    pub mean_decrease_small: f64,
    pub mean_decrease_large: f64,
    pub mean_slack_small: f64,
    pub std_err_small: f64,
    pub mean_slack_large: f64,
    pub std_err_large: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochDecreaseReport {
    pub eta: f64,
    pub epoch_len: usize,
    pub minibatch: usize,
    pub replications: usize,
    pub epochs: Vec<EpochStat>,
    pub all_pass: bool,
    pub svrg: SvrgContrast,
}

#[derive(Clone, Copy)]
enum Variant {
    Recursive,
    Snapshot,
}

struct EpochSample {
    f_start: f64,
    f_end: f64,
    required: f64,
}

/// Runs `epochs` consecutive epochs of `m` update steps from `x0`, recording
/// exact gradient norms along the way. No random stops.
fn sample_epochs(
    problem: &dyn Problem,
    n: usize,
    eta: f64,
    m: usize,
    b: usize,
    x0: &[f64],
    epochs: usize,
    variant: Variant,
    rng: &mut RngStream,
) -> Result<Vec<EpochSample>> {
    let mut sfo = SfoCounter::default();
    let mut x = ParamVector::from(x0);
    let mut g_exact = ParamVector::zeros(x.dim());
    let mut out = Vec::with_capacity(epochs);
    for s in 0..epochs {
        let f_start = problem.value(&x);
        problem.full_grad(&x, &mut g_exact)?;
        let anchor_g = g_exact.clone();
        let mut rec = EstimatorState::recursive(x.clone(), anchor_g.clone());
        let snap = EstimatorState::snapshot(x.clone(), anchor_g.clone());
        let mut v = anchor_g;
        let mut required = 0.0;
        for j in 1..=m {
            if j > 1 {
                problem.full_grad(&x, &mut g_exact)?;
            }
            required += norm_sq(&g_exact);
            axpy(-eta, &v, &mut x);
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    what: "iterate",
                    iter: (s * m + j) as u64,
                });
            }
            let batch = sample_minibatch(rng, n, b);
            match variant {
                Variant::Recursive => {
                    recursive_step(problem, &mut rec, &x, &batch, &mut sfo)?;
                    v.copy_from_slice(&rec.v);
                }
                Variant::Snapshot => v = svrg_step(problem, &snap, &x, &batch, &mut sfo)?,
            }
        }
        out.push(EpochSample {
            f_start,
            f_end: problem.value(&x),
            required: 0.5 * eta * required,
        });
    }
    Ok(out)
}

/// Monte Carlo check of the per-epoch decrease
/// `E f(x_{(s+1)m}) ≤ E f(x_sm) − (η/2) Σ_j E‖∇f(x_{j−1})‖²`
/// for the recursive estimator, plus the SVRG contrast at `b = m` vs `b = m²`.
pub fn verify_epoch_decrease(
    problem: &dyn Problem,
    cfg: &RunConfig,
    x0: &[f64],
    epochs: usize,
    replications: usize,
    rng: &mut RngStream,
) -> Result<EpochDecreaseReport> {
    let n = match problem.mode() {
        Mode::FiniteSum { n } => n,
        Mode::Online => return Err(Error::UnsupportedOracle("epoch check needs a finite sum")),
    };
    let l = problem.smoothness().lipschitz_grad;
    let (eta, m, b) = (cfg.eta, cfg.epoch_len, cfg.minibatch);
    if !(eta > 0.0) || eta > GOLDEN_STEP / l * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "epoch check needs 0 < eta <= (sqrt(5)-1)/(2L) = {}, got {eta}",
            GOLDEN_STEP / l
        )));
    }
    if m == 0 || b < m {
        return Err(Error::InvalidConfig(format!("epoch check needs b >= m >= 1, got b={b}, m={m}")));
    }
    if epochs == 0 || replications == 0 {
        return Err(Error::InvalidInput("epochs and replications must be positive".into()));
    }
    if x0.len() != problem.dim() {
        return Err(Error::InvalidInput(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            problem.dim()
        )));
    }

    let mut start = vec![Welford::default(); epochs];
    let mut end = vec![Welford::default(); epochs];
    let mut req = vec![Welford::default(); epochs];
    let mut slack = vec![Welford::default(); epochs];
    for _ in 0..replications {
        let samples = sample_epochs(problem, n, eta, m, b, x0, epochs, Variant::Recursive, rng)?;
        for (s, e) in samples.iter().enumerate() {
            start[s].push(e.f_start);
            end[s].push(e.f_end);
            req[s].push(e.required);
            slack[s].push(e.f_start - e.required - e.f_end);
        }
    }
    let stats: Vec<EpochStat> = (0..epochs)
        .map(|s| {
            let (ms, se) = (slack[s].mean(), slack[s].std_err());
            EpochStat {
                epoch: s,
                mean_f_start: start[s].mean(),
                mean_f_end: end[s].mean(),
                mean_required_decrease: req[s].mean(),
                mean_slack: ms,
                std_err: se,
                pass: ms >= -SE_SLACK * se - 1e-12 * (1.0 + start[s].mean().abs()),
            }
        })
        .collect();

    let mut svrg_stats = |bb: usize| -> Result<(f64, Welford)> {
        let mut dec = Welford::default();
        let mut sl = Welford::default();
        for _ in 0..replications {
            let first = &sample_epochs(problem, n, eta, m, bb, x0, 1, Variant::Snapshot, rng)?[0];
            dec.push(first.f_start - first.f_end);
            sl.push(first.f_start - first.required - first.f_end);
        }
        Ok((dec.mean(), sl))
    };
    let (dec_small, sl_small) = svrg_stats(m)?;
    let (dec_large, sl_large) = svrg_stats(m * m)?;

    Ok(EpochDecreaseReport {
        eta,
        epoch_len: m,
        minibatch: b,
        replications,
        all_pass: stats.iter().all(|s| s.pass),
        epochs: stats,
        svrg: SvrgContrast {
            b_small: m,
            b_large: m * m,
            mean_decrease_small: dec_small,
            mean_decrease_large: dec_large,
            mean_slack_small: sl_small.mean(),
            std_err_small: sl_small.std_err(),
            mean_slack_large: sl_large.mean(),
            std_err_large: sl_large.std_err(),
        },
    })
}
