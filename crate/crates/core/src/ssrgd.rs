//! Perturbed stochastic recursive gradient descent.
//!
//! Each epoch starts from an anchor gradient (exact in finite-sum mode, a
//! large batch online) and takes up to `m` steps driven by the recursive
//! estimator. Outside a super epoch the epoch ends at a uniformly random step,
//! so the next anchor is a uniformly sampled iterate of the epoch. When that
//! anchor has a small gradient the iterate is perturbed inside a ball of
//! radius `r` and a super epoch starts; it ends once `f` has dropped by `𝓕`
//! from the pre-perturbation point or after `𝓣` steps.

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, GOLDEN_STEP};
use crate::error::{Error, Result};
use crate::estimators::{anchor_gradient, recursive_step, EstimatorState};
use crate::problem::{Mode, Problem, ProblemExt, SfoCounter};
use crate::rng::{
    sample_minibatch, sample_minibatch_without_replacement, sample_online, sample_uniform_ball,
    streams, IndexMultiset, RngStream,
};
use crate::trace::{Event, TraceRecord};
use crate::vector::{axpy, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    SospCertified,
    MaxEpochs,
    /// Anchor gradient norm reached `eps` (`stop_at_fosp`).
    FospReached,
    /// The epoch observer asked to stop.
    Observer,
}

/// One perturbation and the quantities its cost bound is stated in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub iter: u64,
    /// `f(x̃)` before the perturbation.
    pub f_anchor: f64,
    /// `f(x̃ + ξ)`.
    pub f_perturbed: f64,
    /// Norm of the gradient used for the threshold check at `x̃`.
    pub anchor_grad_norm: f64,
    pub g_thres: f64,
    pub radius: f64,
    pub lipschitz: f64,
}

impl PerturbationRecord {
    /// `f(x̃) + 𝓖 r + (L/2) r²`.
    pub fn cost_bound(&self) -> f64 {
        self.f_anchor + self.g_thres * self.radius + 0.5 * self.lipschitz * self.radius * self.radius
    }

    pub fn bound_holds(&self) -> bool {
        self.f_perturbed <= self.cost_bound()
    }
}

/// Iterates of one super epoch, starting at the perturbed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperEpochRecord {
    pub t_init: u64,
    pub x_anchor: ParamVector,
    pub f_anchor: f64,
    pub points: Vec<ParamVector>,
    pub f_values: Vec<f64>,
    /// `None` if the run ended inside the super epoch.
    pub end: Option<Event>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsrgdOutcome {
    pub final_x: ParamVector,
    pub trace: Vec<TraceRecord>,
    /// `(iteration, x̃)` for every super-epoch trigger.
    pub sosp_candidates: Vec<(u64, ParamVector)>,
    pub termination: Termination,
    pub sfo: SfoCounter,
    pub perturbations: Vec<PerturbationRecord>,
    pub super_epochs: Vec<SuperEpochRecord>,
    pub warnings: Vec<String>,
}

impl SsrgdOutcome {
    pub(crate) fn empty(x0: &[f64], termination: Termination) -> Self {
        SsrgdOutcome {
            final_x: x0.into(),
            trace: Vec::new(),
            sosp_candidates: Vec::new(),
            termination,
            sfo: SfoCounter::default(),
            perturbations: Vec::new(),
            super_epochs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Raw SFO at the first logged gradient norm `≤ eps`.
    pub fn sfo_to_fosp(&self, eps: f64) -> Option<u64> {
        self.trace
            .iter()
            .find(|r| r.grad_norm.is_some_and(|g| g <= eps))
            .map(|r| r.sfo)
    }
}

/// A run that stopped on an error, with whatever it logged before.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<SsrgdOutcome>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace rows)", self.error, self.partial.trace.len())
    }
}

impl std::error::Error for RunFailure {}

/// Decides whether a point is an approximate second-order stationary point.
pub trait Certifier {
    fn is_sosp(&self, problem: &dyn Problem, x: &[f64]) -> Result<bool>;
}

/// State handed to an epoch observer.
pub struct EpochView<'a> {
    pub iter: u64,
    pub x: &'a [f64],
    pub anchor_grad_norm: f64,
    pub sfo: SfoCounter,
}

#[derive(Default)]
pub struct RunHooks<'a> {
    /// Evaluated at every super-epoch trigger point.
    pub certifier: Option<&'a dyn Certifier>,
    /// Called at every epoch start; returning `true` stops the run.
    pub observer: Option<&'a mut dyn FnMut(&EpochView<'_>) -> bool>,
}

/// Finite-sum first-order parameters: `η = (√5−1)/(2L)`, `m = b = ⌈√n⌉`, no perturbation.
pub fn derive_config_first_order(problem: &dyn Problem, eps: f64) -> Result<RunConfig> {
    let n = match problem.mode() {
        Mode::FiniteSum { n } => n,
        Mode::Online => {
            return Err(Error::InvalidConfig(
                "online problem: use derive_config_online_first_order".into(),
            ))
        }
    };
    check_eps(eps)?;
    let l = lipschitz(problem)?;
    let m = ceil_sqrt(n);
    Ok(RunConfig {
        eta: GOLDEN_STEP / l,
        epoch_len: m,
        minibatch: m,
        batch: n,
        perturb_radius: 0.0,
        g_thres: 0.0,
        f_thres: 0.0,
        super_epoch_len: 0,
        eps,
        delta: 0.0,
        sfo_budget: default_budget(n as f64, (n as f64).sqrt(), eps),
        seed: 0,
        logfactor: 1.0,
        second_order: false,
        max_epochs: None,
        stop_at_fosp: false,
        without_replacement: false,
        record_super_epochs: false,
    })
}

/// Finite-sum second-order parameters with every polylog factor replaced by `logfactor`.
pub fn derive_config_second_order(
    problem: &dyn Problem,
    eps: f64,
    delta: f64,
    logfactor: f64,
) -> Result<RunConfig> {
    let mut cfg = derive_config_first_order(problem, eps)?;
    apply_second_order(problem, &mut cfg, delta, logfactor)?;
    Ok(cfg)
}

/// Online first-order parameters: `B = 4σ²/ε²`, `b = m = ⌈√B⌉`.
pub fn derive_config_online_first_order(problem: &dyn Problem, eps: f64) -> Result<RunConfig> {
    check_eps(eps)?;
    let l = lipschitz(problem)?;
    let sigma = problem.smoothness().variance_bound;
    let batch = ((4.0 * sigma * sigma / (eps * eps)).ceil() as usize).max(1);
    let m = ceil_sqrt(batch);
    Ok(RunConfig {
        eta: GOLDEN_STEP / l,
        epoch_len: m,
        minibatch: m,
        batch,
        perturb_radius: 0.0,
        g_thres: 0.0,
        f_thres: 0.0,
        super_epoch_len: 0,
        eps,
        delta: 0.0,
        sfo_budget: default_budget(batch as f64, sigma / eps, eps),
        seed: 0,
        logfactor: 1.0,
        second_order: false,
        max_epochs: None,
        stop_at_fosp: false,
        without_replacement: false,
        record_super_epochs: false,
    })
}

/// Online second-order parameters on top of the online first-order batch sizes.
pub fn derive_config_online_second_order(
    problem: &dyn Problem,
    eps: f64,
    delta: f64,
    logfactor: f64,
) -> Result<RunConfig> {
    let mut cfg = derive_config_online_first_order(problem, eps)?;
    apply_second_order(problem, &mut cfg, delta, logfactor)?;
    Ok(cfg)
}

fn apply_second_order(problem: &dyn Problem, cfg: &mut RunConfig, delta: f64, logfactor: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
    }
    if !(logfactor > 0.0) || !logfactor.is_finite() {
        return Err(Error::InvalidConfig(format!("logfactor must be positive, got {logfactor}")));
    }
    let s = problem.smoothness();
    let (l, rho, eps) = (s.lipschitz_grad, s.lipschitz_hess, cfg.eps);
    if !(rho > 0.0) {
        return Err(Error::InvalidMetadata(
            "second-order mode needs a positive Hessian Lipschitz constant".into(),
        ));
    }
    let eta = (logfactor / l).min(GOLDEN_STEP / l);
    cfg.eta = eta;
    cfg.g_thres = eps;
    cfg.f_thres = logfactor * delta.powi(3) / (rho * rho);
    cfg.super_epoch_len = (logfactor / (eta * delta)).ceil() as u64;
    cfg.perturb_radius =
        logfactor * (delta.powi(3) / (rho * rho * eps)).min(delta.powf(1.5) / (rho * l.sqrt()));
    cfg.delta = delta;
    cfg.logfactor = logfactor;
    cfg.second_order = true;
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")))
    }
}

fn lipschitz(problem: &dyn Problem) -> Result<f64> {
    let l = problem.smoothness().lipschitz_grad;
    if l > 0.0 && l.is_finite() {
        Ok(l)
    } else {
        Err(Error::InvalidMetadata(format!(
            "gradient Lipschitz constant must be positive, got {l}"
        )))
    }
}

fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt().floor() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.max(1)
}

fn default_budget(anchor: f64, per_step: f64, eps: f64) -> u64 {
    (100.0 * (anchor + per_step / (eps * eps))).min(1e15) as u64
}

/// `true` with probability `1 / (m − k + 1)`; always `true` at `k = m`.
pub fn random_stop_decision(rng: &mut RngStream, k: usize, m: usize) -> bool {
    assert!(k >= 1 && k <= m, "step {k} outside 1..={m}");
    rng.uniform() < 1.0 / (m - k + 1) as f64
}

/// Draws a minibatch according to the problem mode and config.
pub fn draw_minibatch(problem: &dyn Problem, cfg: &RunConfig, rng: &mut RngStream) -> IndexMultiset {
    match problem.mode() {
        Mode::FiniteSum { n } if cfg.without_replacement => {
            sample_minibatch_without_replacement(rng, n, cfg.minibatch)
        }
        Mode::FiniteSum { n } => sample_minibatch(rng, n, cfg.minibatch),
        Mode::Online => sample_online(rng, cfg.minibatch),
    }
}

fn anchor_cost(problem: &dyn Problem, cfg: &RunConfig) -> u64 {
    match problem.mode() {
        Mode::FiniteSum { n } => n as u64,
        Mode::Online => cfg.batch as u64,
    }
}

struct Streams {
    perturbation: RngStream,
    minibatch: RngStream,
    random_stop: RngStream,
    large_batch: RngStream,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            perturbation: RngStream::new(seed, streams::PERTURBATION),
            minibatch: RngStream::new(seed, streams::MINIBATCH),
            random_stop: RngStream::new(seed, streams::RANDOM_STOP),
            large_batch: RngStream::new(seed, streams::LARGE_BATCH),
        }
    }
}

struct SuperEpoch {
    f_anchor: f64,
    t_init: u64,
    record: Option<SuperEpochRecord>,
}

/// Runs SSRGD from `x0` without hooks.
pub fn run_ssrgd(problem: &dyn Problem, cfg: &RunConfig, x0: &[f64]) -> std::result::Result<SsrgdOutcome, RunFailure> {
    run_ssrgd_with(problem, cfg, x0, RunHooks::default())
}

pub fn run_ssrgd_with(
    problem: &dyn Problem,
    cfg: &RunConfig,
    x0: &[f64],
    mut hooks: RunHooks<'_>,
) -> std::result::Result<SsrgdOutcome, RunFailure> {
    let mut out = SsrgdOutcome::empty(x0, Termination::BudgetExhausted);
    let fail = |error: Error, out: SsrgdOutcome| RunFailure {
        error,
        partial: Box::new(out),
    };
    if x0.len() != problem.dim() {
        return Err(fail(
            Error::InvalidInput(format!("x0 has length {}, expected {}", x0.len(), problem.dim())),
            out,
        ));
    }
    if let Err(e) = cfg.validate(problem) {
        return Err(fail(e, out));
    }
    if !x0.iter().all(|c| c.is_finite()) {
        return Err(fail(Error::NonFinite { what: "initial point", iter: 0 }, out));
    }

    let l = problem.smoothness().lipschitz_grad;
    let m = cfg.epoch_len;
    let b = cfg.minibatch as u64;
    let anchor_sfo = anchor_cost(problem, cfg);
    let mut rngs = Streams::new(cfg.seed);
    let mut sfo = SfoCounter::default();
    let mut x = ParamVector::from(x0);
    let mut t: u64 = 0;
    let mut epochs: u64 = 0;
    let mut super_epoch: Option<SuperEpoch> = None;
    let mut warned_domain = false;

    macro_rules! finish {
        ($term:expr) => {{
            if let Some(se) = super_epoch.take() {
                if let Some(rec) = se.record {
                    out.super_epochs.push(rec);
                }
            }
            out.final_x = x;
            out.sfo = sfo;
            out.termination = $term;
            return Ok(out);
        }};
    }
    macro_rules! abort {
        ($what:expr) => {{
            out.final_x = x;
            out.sfo = sfo;
            return Err(fail(Error::NonFinite { what: $what, iter: t }, out));
        }};
    }

    loop {
        if cfg.max_epochs.is_some_and(|cap| epochs >= cap) {
            finish!(Termination::MaxEpochs);
        }
        if sfo.raw + anchor_sfo > cfg.sfo_budget {
            finish!(Termination::BudgetExhausted);
        }
        let g = match anchor_gradient(problem, &x, cfg.batch, &mut rngs.large_batch, &mut sfo) {
            Ok(g) => g,
            Err(e) => return Err(fail(e, out)),
        };
        if !g.is_finite() {
            abort!("anchor gradient");
        }
        let g_norm = g.norm();
        let f_x = problem.value(&x);
        if !f_x.is_finite() {
            abort!("function value");
        }
        out.trace.push(TraceRecord {
            iter: t,
            f_value: f_x,
            grad_norm: Some(g_norm),
            sfo: sfo.raw,
            sfo_paper: sfo.paper,
            event: Event::EpochStart,
        });
        if let Some(obs) = hooks.observer.as_mut() {
            let view = EpochView {
                iter: t,
                x: &x,
                anchor_grad_norm: g_norm,
                sfo,
            };
            if obs(&view) {
                finish!(Termination::Observer);
            }
        }
        if cfg.stop_at_fosp && g_norm <= cfg.eps {
            finish!(Termination::FospReached);
        }

        let mut v = g;
        if cfg.second_order && super_epoch.is_none() && g_norm <= cfg.g_thres {
            out.sosp_candidates.push((t, x.clone()));
            if let Some(cert) = hooks.certifier {
                match cert.is_sosp(problem, &x) {
                    Ok(true) => finish!(Termination::SospCertified),
                    Ok(false) => {}
                    Err(e) => return Err(fail(e, out)),
                }
            }
            // The perturbed point needs a fresh anchor.
            if sfo.raw + anchor_sfo > cfg.sfo_budget {
                finish!(Termination::BudgetExhausted);
            }
            let x_anchor = x.clone();
            let xi = sample_uniform_ball(&mut rngs.perturbation, x.dim(), cfg.perturb_radius);
            axpy(1.0, &xi, &mut x);
            let f_pert = problem.value(&x);
            if !f_pert.is_finite() {
                abort!("function value");
            }
            out.perturbations.push(PerturbationRecord {
                iter: t,
                f_anchor: f_x,
                f_perturbed: f_pert,
                anchor_grad_norm: g_norm,
                g_thres: cfg.g_thres,
                radius: cfg.perturb_radius,
                lipschitz: l,
            });
            v = match anchor_gradient(problem, &x, cfg.batch, &mut rngs.large_batch, &mut sfo) {
                Ok(g) => g,
                Err(e) => return Err(fail(e, out)),
            };
            if !v.is_finite() {
                abort!("anchor gradient");
            }
            out.trace.push(TraceRecord {
                iter: t,
                f_value: f_pert,
                grad_norm: Some(v.norm()),
                sfo: sfo.raw,
                sfo_paper: sfo.paper,
                event: Event::Perturbation,
            });
            let record = cfg.record_super_epochs.then(|| SuperEpochRecord {
                t_init: t,
                x_anchor,
                f_anchor: f_x,
                points: vec![x.clone()],
                f_values: vec![f_pert],
                end: None,
            });
            super_epoch = Some(SuperEpoch {
                f_anchor: f_x,
                t_init: t,
                record,
            });
        }

        let mut est = EstimatorState::recursive(x.clone(), v);
        for k in 1..=m {
            if sfo.raw + 2 * b > cfg.sfo_budget {
                finish!(Termination::BudgetExhausted);
            }
            axpy(-cfg.eta, &est.v, &mut x);
            if !x.is_finite() {
                abort!("iterate");
            }
            t += 1;
            let batch = draw_minibatch(problem, cfg, &mut rngs.minibatch);
            if let Err(e) = recursive_step(problem, &mut est, &x, &batch, &mut sfo) {
                return Err(fail(e, out));
            }
            if !est.v.is_finite() {
                abort!("gradient estimate");
            }
            let f_t = problem.value(&x);
            if !f_t.is_finite() {
                abort!("function value");
            }
            if !warned_domain && !problem.in_domain(&x) {
                warned_domain = true;
                let msg = format!("iterate left the declared domain box at iteration {t}");
                log::warn!("{msg}");
                out.warnings.push(msg);
            }

            let mut event = Event::None;
            let mut stop = false;
            if let Some(se) = super_epoch.as_mut() {
                if let Some(rec) = se.record.as_mut() {
                    rec.points.push(x.clone());
                    rec.f_values.push(f_t);
                }
                if se.f_anchor - f_t >= cfg.f_thres {
                    event = Event::SuperEpochEndFdecrease;
                } else if t - se.t_init >= cfg.super_epoch_len {
                    event = Event::SuperEpochEndTimeout;
                }
                if event != Event::None {
                    let se = super_epoch.take().expect("checked above");
                    if let Some(mut rec) = se.record {
                        rec.end = Some(event);
                        out.super_epochs.push(rec);
                    }
                    stop = true;
                }
            } else if random_stop_decision(&mut rngs.random_stop, k, m) {
                event = Event::RandomStop;
                stop = true;
            }
            out.trace.push(TraceRecord {
                iter: t,
                f_value: f_t,
                grad_norm: None,
                sfo: sfo.raw,
                sfo_paper: sfo.paper,
                event,
            });
            if stop {
                break;
            }
        }
        epochs += 1;
    }
}

/// Runs plain SSRGD update steps (anchor every `m` steps, recursive estimator
/// in between, no stops or perturbations) for `steps` iterations.
///
/// Minibatches and large batches are drawn from `rng`, so two calls with
/// clones of the same stream see identical index sequences. `on_batch` sees
/// every index multiset in draw order.
pub fn run_update_steps(
    problem: &dyn Problem,
    cfg: &RunConfig,
    x0: &[f64],
    steps: u64,
    rng: &mut RngStream,
    mut on_batch: impl FnMut(&[usize]),
) -> Result<Vec<ParamVector>> {
    let m = cfg.epoch_len.max(1) as u64;
    let mut sfo = SfoCounter::default();
    let mut x = ParamVector::from(x0);
    let mut traj = Vec::with_capacity(steps as usize + 1);
    traj.push(x.clone());
    let mut est: Option<EstimatorState> = None;
    for t in 0..steps {
        if t % m == 0 {
            if problem.mode() == Mode::Online {
                let idx = sample_online(rng, cfg.batch);
                on_batch(&idx);
                let mut g = ParamVector::zeros(x.dim());
                problem.accumulate_component_grads(&idx, &x, 1.0 / idx.len() as f64, &mut g);
                est = Some(EstimatorState::recursive(x.clone(), g));
            } else {
                let g = anchor_gradient(problem, &x, cfg.batch, rng, &mut sfo)?;
                est = Some(EstimatorState::recursive(x.clone(), g));
            }
        }
        let st = est.as_mut().expect("anchor set at epoch start");
        axpy(-cfg.eta, &st.v, &mut x);
        if !x.is_finite() {
            return Err(Error::NonFinite { what: "iterate", iter: t + 1 });
        }
        let batch = draw_minibatch(problem, cfg, rng);
        on_batch(&batch);
        recursive_step(problem, st, &x, &batch, &mut sfo)?;
        traj.push(x.clone());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_nonconvex_logistic, QuadraticSum};
    use crate::rng::seeded_rng;

    #[test]
    fn first_order_derivation_matches_closed_form() {
        let p = QuadraticSum::isotropic(10_000, 1);
        let cfg = derive_config_first_order(&p, 0.1).unwrap();
        assert_eq!((cfg.epoch_len, cfg.minibatch), (100, 100));
        assert!((cfg.eta - 0.618).abs() < 1e-3);
        assert_eq!(cfg.perturb_radius, 0.0);
        assert_eq!(cfg.g_thres, 0.0);
        assert!(!cfg.second_order);
    }

    #[test]
    fn first_order_single_component() {
        let p = QuadraticSum::isotropic(1, 2);
        let cfg = derive_config_first_order(&p, 0.1).unwrap();
        assert_eq!((cfg.epoch_len, cfg.minibatch), (1, 1));
    }

    #[test]
    fn first_order_step_scales_with_lipschitz() {
        let p = QuadraticSum::diagonal_scalar(&[10.0, 10.0]);
        let cfg = derive_config_first_order(&p, 0.1).unwrap();
        assert!((cfg.eta - (5f64.sqrt() - 1.0) / 20.0).abs() < 1e-12);
    }

    #[test]
    fn ceil_sqrt_edges() {
        assert_eq!(ceil_sqrt(1), 1);
        assert_eq!(ceil_sqrt(2), 2);
        assert_eq!(ceil_sqrt(4096), 64);
        assert_eq!(ceil_sqrt(4097), 65);
    }

    #[test]
    fn online_derivation_requires_no_n() {
        let p = QuadraticSum::isotropic(4, 2);
        assert!(derive_config_first_order(&p, 0.1).is_ok());
        let base = crate::problems::make_separable_saddle(2, 4, 0.5, 0.0, 0).unwrap();
        let online = crate::problems::make_online_stream(&base, 1.0, 0).unwrap();
        assert!(derive_config_first_order(online.problem.as_ref(), 0.1).is_err());
        let cfg = derive_config_online_first_order(online.problem.as_ref(), 0.1).unwrap();
        assert_eq!(cfg.batch, 400);
        assert_eq!(cfg.minibatch, 20);
        assert_eq!(cfg.epoch_len, 20);
    }

    #[test]
    fn random_stop_last_step_always_stops() {
        let mut rng = seeded_rng(1, 0);
        for m in 1..20 {
            assert!(random_stop_decision(&mut rng, m, m));
        }
    }

    #[test]
    fn random_stop_index_is_uniform_for_m4() {
        let mut rng = seeded_rng(2, 0);
        let trials = 1_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            let k = (1..=4).find(|&k| random_stop_decision(&mut rng, k, 4)).unwrap();
            counts[k - 1] += 1;
        }
        for c in counts {
            let p = c as f64 / trials as f64;
            assert!((p - 0.25).abs() < 0.005, "{p}");
        }
    }

    #[test]
    fn zero_budget_gives_empty_trace() {
        let p = QuadraticSum::isotropic(4, 2);
        let mut cfg = derive_config_first_order(&p, 0.1).unwrap();
        cfg.sfo_budget = 0;
        let out = run_ssrgd(&p, &cfg, &[1.0, 1.0]).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.termination, Termination::BudgetExhausted);
    }

    #[test]
    fn first_order_mode_never_perturbs() {
        let inst = make_nonconvex_logistic(64, 5, 0.1, 3).unwrap();
        let mut cfg = derive_config_first_order(inst.problem.as_ref(), 0.01).unwrap();
        cfg.sfo_budget = 20_000;
        let out = run_ssrgd(inst.problem.as_ref(), &cfg, &[0.5; 5]).unwrap();
        assert!(out.trace.iter().all(|r| r.event != Event::Perturbation));
        assert!(out.perturbations.is_empty());
    }

    #[test]
    fn invalid_step_rejected() {
        let p = QuadraticSum::isotropic(4, 2);
        let mut cfg = derive_config_first_order(&p, 0.1).unwrap();
        cfg.eta = -1.0;
        let err = run_ssrgd(&p, &cfg, &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err.error, Error::InvalidConfig(ref m) if m.contains("eta > 0")));
    }

    #[test]
    fn second_order_needs_rho() {
        let p = QuadraticSum::isotropic(4, 2);
        let err = derive_config_second_order(&p, 0.1, 0.1, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidMetadata(_)));
    }

    /// Problem that returns NaN gradients past a threshold.
    struct Blowup;

    impl Problem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn mode(&self) -> Mode {
            Mode::FiniteSum { n: 2 }
        }
        fn smoothness(&self) -> crate::problem::Smoothness {
            crate::problem::Smoothness {
                lipschitz_grad: 1.0,
                lipschitz_hess: 1.0,
                variance_bound: 0.0,
            }
        }
        fn value(&self, x: &[f64]) -> f64 {
            -x[0]
        }
        fn component_grad(&self, _i: usize, x: &[f64], out: &mut [f64]) {
            out[0] = if x[0] > 3.0 { f64::NAN } else { -1.0 };
        }
    }

    #[test]
    fn non_finite_oracle_aborts_with_trace() {
        let mut cfg = derive_config_first_order(&Blowup, 0.1).unwrap();
        cfg.sfo_budget = 10_000;
        let err = run_ssrgd(&Blowup, &cfg, &[0.0]).unwrap_err();
        assert!(matches!(err.error, Error::NonFinite { .. }));
        assert!(!err.partial.trace.is_empty());
    }
}
