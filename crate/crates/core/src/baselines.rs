//! Reference optimizers sharing the SSRGD oracle and trace interfaces.
//!
//! Perturbed GD reuses the SSRGD trigger pattern (gradient threshold, uniform
//! ball, escape window) rather than a published schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{full_gradient, svrg_step, EstimatorState};
use crate::problem::{Mode, Problem, SfoCounter};
use crate::rng::{sample_minibatch, sample_online, sample_uniform_ball, RngStream};
use crate::ssrgd::{PerturbationRecord, RunFailure, SsrgdOutcome, Termination};
use crate::trace::{Event, TraceRecord};
use crate::vector::{axpy, ParamVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    Gd {
        eta: f64,
    },
    PerturbedGd {
        eta: f64,
        radius: f64,
        g_thres: f64,
        f_thres: f64,
        escape_len: u64,
    },
    /// Constant step size.
    Sgd {
        eta: f64,
        minibatch: usize,
    },
    Svrg {
        eta: f64,
        minibatch: usize,
        epoch_len: usize,
    },
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Gd { .. } => "gd",
            BaselineKind::PerturbedGd { .. } => "perturbed_gd",
            BaselineKind::Sgd { .. } => "sgd",
            BaselineKind::Svrg { .. } => "svrg",
        }
    }

    pub fn eta(&self) -> f64 {
        match *self {
            BaselineKind::Gd { eta }
            | BaselineKind::PerturbedGd { eta, .. }
            | BaselineKind::Sgd { eta, .. }
            | BaselineKind::Svrg { eta, .. } => eta,
        }
    }

    pub fn validate(&self, problem: &dyn Problem) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let eta = self.eta();
        if !(eta > 0.0) || !eta.is_finite() {
            return bad(format!("{}: step size eta must satisfy eta > 0, got {eta}", self.name()));
        }
        match *self {
            BaselineKind::Gd { .. } | BaselineKind::PerturbedGd { .. } | BaselineKind::Svrg { .. }
                if problem.mode() == Mode::Online =>
            {
                Err(Error::UnsupportedOracle("full gradient in online mode"))
            }
            BaselineKind::PerturbedGd {
                radius,
                g_thres,
                f_thres,
                escape_len,
                ..
            } => {
                if !(radius > 0.0) || !(g_thres >= 0.0) || !(f_thres > 0.0) || escape_len == 0 {
                    return bad(format!(
                        "perturbed_gd needs radius > 0, g_thres >= 0, f_thres > 0 and escape_len > 0 \
                         (got {radius}, {g_thres}, {f_thres}, {escape_len})"
                    ));
                }
                Ok(())
            }
            BaselineKind::Sgd { minibatch, .. } if minibatch == 0 => {
                bad("sgd: minibatch must be positive".into())
            }
            BaselineKind::Svrg {
                minibatch,
                epoch_len,
                ..
            } => {
                if epoch_len == 0 {
                    return bad("svrg requires an epoch length".into());
                }
                if minibatch == 0 {
                    return bad("svrg: minibatch must be positive".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Called by SVRG with `(x̃, ∇f(x̃))` at every snapshot.
pub type SnapshotHook<'a> = &'a mut dyn FnMut(&[f64], &[f64]);

/// Runs a baseline from `x0` until the raw SFO budget would be exceeded.
pub fn run_baseline(
    kind: &BaselineKind,
    problem: &dyn Problem,
    x0: &[f64],
    budget: u64,
    rng: &mut RngStream,
) -> std::result::Result<SsrgdOutcome, RunFailure> {
    run_inner(kind, problem, x0, budget, None, rng, None)
}

/// Like [`run_baseline`], but also stops at the first exactly computed
/// gradient norm `≤ stop_grad_norm`. SGD never computes one, so it only stops
/// on the budget. Perturbed GD does not stop inside an escape window.
pub fn run_baseline_until(
    kind: &BaselineKind,
    problem: &dyn Problem,
    x0: &[f64],
    budget: u64,
    stop_grad_norm: Option<f64>,
    rng: &mut RngStream,
) -> std::result::Result<SsrgdOutcome, RunFailure> {
    run_inner(kind, problem, x0, budget, stop_grad_norm, rng, None)
}

pub fn run_baseline_with(
    kind: &BaselineKind,
    problem: &dyn Problem,
    x0: &[f64],
    budget: u64,
    rng: &mut RngStream,
    on_snapshot: Option<SnapshotHook<'_>>,
) -> std::result::Result<SsrgdOutcome, RunFailure> {
    run_inner(kind, problem, x0, budget, None, rng, on_snapshot)
}

fn run_inner(
    kind: &BaselineKind,
    problem: &dyn Problem,
    x0: &[f64],
    budget: u64,
    stop_grad_norm: Option<f64>,
    rng: &mut RngStream,
    on_snapshot: Option<SnapshotHook<'_>>,
) -> std::result::Result<SsrgdOutcome, RunFailure> {
    let mut run = Run {
        problem,
        out: SsrgdOutcome::empty(x0, Termination::BudgetExhausted),
        sfo: SfoCounter::default(),
        x: ParamVector::from(x0),
        t: 0,
        budget,
        stop_grad_norm,
    };
    let checks = (|| {
        if budget == 0 {
            return Err(Error::InvalidConfig("SFO budget must be positive".into()));
        }
        if x0.len() != problem.dim() {
            return Err(Error::InvalidInput(format!(
                "x0 has length {}, expected {}",
                x0.len(),
                problem.dim()
            )));
        }
        kind.validate(problem)
    })();
    let res = checks.and_then(|_| match *kind {
        BaselineKind::Gd { eta } => run.gd(eta, None, rng),
        BaselineKind::PerturbedGd {
            eta,
            radius,
            g_thres,
            f_thres,
            escape_len,
        } => run.gd(
            eta,
            Some(Escape {
                radius,
                g_thres,
                f_thres,
                escape_len,
            }),
            rng,
        ),
        BaselineKind::Sgd { eta, minibatch } => run.sgd(eta, minibatch, rng),
        BaselineKind::Svrg {
            eta,
            minibatch,
            epoch_len,
        } => run.svrg(eta, minibatch, epoch_len, rng, on_snapshot),
    });
    let Run { mut out, sfo, x, .. } = run;
    out.final_x = x;
    out.sfo = sfo;
    match res {
        Ok(()) => Ok(out),
        Err(error) => Err(RunFailure {
            error,
            partial: Box::new(out),
        }),
    }
}

#[derive(Clone, Copy)]
struct Escape {
    radius: f64,
    g_thres: f64,
    f_thres: f64,
    escape_len: u64,
}

struct Run<'p> {
    problem: &'p dyn Problem,
    out: SsrgdOutcome,
    sfo: SfoCounter,
    x: ParamVector,
    t: u64,
    budget: u64,
    stop_grad_norm: Option<f64>,
}

impl Run<'_> {
    fn n(&self) -> u64 {
        self.problem.mode().n().unwrap_or(0) as u64
    }

    fn value(&self) -> Result<f64> {
        let f = self.problem.value(&self.x);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFinite {
                what: "function value",
                iter: self.t,
            })
        }
    }

    fn gradient(&mut self) -> Result<ParamVector> {
        let g = full_gradient(self.problem, &self.x, &mut self.sfo)?;
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: "gradient",
                iter: self.t,
            });
        }
        Ok(g)
    }

    /// Records a FOSP stop if `g_norm` is below the stop threshold.
    fn reached(&mut self, g_norm: f64) -> bool {
        let hit = self.stop_grad_norm.is_some_and(|eps| g_norm <= eps);
        if hit {
            self.out.termination = Termination::FospReached;
        }
        hit
    }

    fn log(&mut self, f: f64, grad_norm: Option<f64>, event: Event) {
        self.out.trace.push(TraceRecord {
            iter: self.t,
            f_value: f,
            grad_norm,
            sfo: self.sfo.raw,
            sfo_paper: self.sfo.paper,
            event,
        });
    }

    fn step(&mut self, eta: f64, v: &[f64]) -> Result<()> {
        axpy(-eta, v, &mut self.x);
        self.t += 1;
        if self.x.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite {
                what: "iterate",
                iter: self.t,
            })
        }
    }

    /// Plain GD; with `escape` set, perturbs whenever the gradient is small
    /// and no escape window is open.
    fn gd(&mut self, eta: f64, escape: Option<Escape>, rng: &mut RngStream) -> Result<()> {
        let n = self.n();
        let l = self.problem.smoothness().lipschitz_grad;
        // (f at the perturbation trigger, iteration it was triggered)
        let mut window: Option<(f64, u64)> = None;
        loop {
            if self.sfo.raw + n > self.budget {
                return Ok(());
            }
            let mut g = self.gradient()?;
            let f = self.value()?;
            let mut event = Event::None;
            if let Some((f0, t0)) = window {
                if f0 - f >= escape.map_or(f64::INFINITY, |e| e.f_thres) {
                    event = Event::SuperEpochEndFdecrease;
                    window = None;
                } else if self.t - t0 >= escape.map_or(0, |e| e.escape_len) {
                    event = Event::SuperEpochEndTimeout;
                    window = None;
                }
            }
            let g_norm = g.norm();
            self.log(f, Some(g_norm), event);
            if window.is_none() && self.reached(g_norm) {
                return Ok(());
            }
            if let Some(esc) = escape {
                if window.is_none() && g_norm <= esc.g_thres {
                    if self.sfo.raw + n > self.budget {
                        return Ok(());
                    }
                    self.out.sosp_candidates.push((self.t, self.x.clone()));
                    let xi = sample_uniform_ball(rng, self.x.dim(), esc.radius);
                    axpy(1.0, &xi, &mut self.x);
                    let f_pert = self.value()?;
                    self.out.perturbations.push(PerturbationRecord {
                        iter: self.t,
                        f_anchor: f,
                        f_perturbed: f_pert,
                        anchor_grad_norm: g_norm,
                        g_thres: esc.g_thres,
                        radius: esc.radius,
                        lipschitz: l,
                    });
                    window = Some((f, self.t));
                    g = self.gradient()?;
                    self.log(f_pert, Some(g.norm()), Event::Perturbation);
                }
            }
            self.step(eta, &g)?;
        }
    }

    fn sgd(&mut self, eta: f64, b: usize, rng: &mut RngStream) -> Result<()> {
        let mut v = ParamVector::zeros(self.x.dim());
        loop {
            if self.sfo.raw + b as u64 > self.budget {
                return Ok(());
            }
            let batch = match self.problem.mode() {
                Mode::FiniteSum { n } => sample_minibatch(rng, n, b),
                Mode::Online => sample_online(rng, b),
            };
            v.iter_mut().for_each(|c| *c = 0.0);
            self.problem
                .accumulate_component_grads(&batch, &self.x, 1.0 / b as f64, &mut v);
            self.sfo.add_batch(b);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: "gradient estimate",
                    iter: self.t,
                });
            }
            self.step(eta, &v)?;
            let f = self.value()?;
            self.log(f, None, Event::None);
        }
    }

    fn svrg(
        &mut self,
        eta: f64,
        b: usize,
        m: usize,
        rng: &mut RngStream,
        mut on_snapshot: Option<SnapshotHook<'_>>,
    ) -> Result<()> {
        let n = self.n();
        let per_step = 2 * b as u64;
        loop {
            if self.sfo.raw + n > self.budget {
                return Ok(());
            }
            let g = self.gradient()?;
            let f = self.value()?;
            let g_norm = g.norm();
            self.log(f, Some(g_norm), Event::EpochStart);
            if self.reached(g_norm) {
                return Ok(());
            }
            if let Some(hook) = on_snapshot.as_mut() {
                hook(&self.x, &g);
            }
            let state = EstimatorState::snapshot(self.x.clone(), g.clone());
            let mut v = g;
            for _ in 0..m {
                if self.sfo.raw + per_step > self.budget {
                    return Ok(());
                }
                self.step(eta, &v)?;
                let batch = sample_minibatch(rng, n as usize, b);
                v = svrg_step(self.problem, &state, &self.x, &batch, &mut self.sfo)?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: "gradient estimate",
                        iter: self.t,
                    });
                }
                let f = self.value()?;
                self.log(f, None, Event::None);
            }
        }
    }
}
