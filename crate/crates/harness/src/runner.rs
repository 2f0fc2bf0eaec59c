//! Cell execution and aggregation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use ssrgd::baselines::run_baseline_until;
use ssrgd::diagnostics::wilson_interval;
use ssrgd::problem::{Mode, ProblemInstance};
use ssrgd::rng::{streams, RngStream};
use ssrgd::spectral::{certify, Certificate, SospCertifier};
use ssrgd::ssrgd::{run_ssrgd_with, RunHooks, SsrgdOutcome, Termination};
use ssrgd::vector::ParamVector;

use crate::config::{build_instances, Cell, ExperimentPlan, Init, OptimizerKind, Resolved};
use crate::error::{io_err, HarnessError, Result};
use crate::trace_csv::write_trace;

pub const WORKERS_ENV: &str = "SSRGD_WORKERS";

/// Candidates certified when looking for the first certified SOSP.
pub const MAX_SOSP_CHECKS: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub run_id: String,
    pub problem: String,
    pub optimizer: String,
    pub optimizer_kind: OptimizerKind,
    pub second_order: bool,
    pub perturbs: bool,
    pub seed: u64,
    pub eps: f64,
    pub delta: f64,
    /// `None` for online problems.
    pub n: Option<usize>,
    pub d: usize,
    pub failed: bool,
    pub error: Option<String>,
    pub termination: Option<Termination>,
    pub sfo: u64,
    pub sfo_paper: u64,
    pub sfo_to_fosp: Option<u64>,
    pub sfo_to_sosp: Option<u64>,
    pub f_initial: f64,
    pub f_final: f64,
    pub final_x: ParamVector,
    pub certificate: Option<Certificate>,
    pub perturbations: usize,
    /// Started at a listed saddle: whether `f` fell below `f(saddle) − 𝓕`.
    pub escaped: Option<bool>,
    pub warnings: Vec<String>,
    pub resolved: Resolved,
    pub wall_time_s: f64,
}

/// Per-cell entry of the aggregate. Omits wall time so reruns match.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub run_id: String,
    pub problem: String,
    pub optimizer: String,
    pub perturbs: bool,
    pub seed: u64,
    pub eps: f64,
    pub n: Option<usize>,
    pub failed: bool,
    pub sfo: u64,
    pub sfo_to_fosp: Option<u64>,
    pub sfo_to_sosp: Option<u64>,
    pub f_final: f64,
    pub escaped: Option<bool>,
    pub trace: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeRate {
    pub optimizer: String,
    pub perturbs: bool,
    pub escaped: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// `"eps"`, `"n"` or `None`.
    pub sweep_axis: Option<String>,
    pub sweep_values: Vec<f64>,
    pub total_sfo: u64,
    pub failed: usize,
    pub escape_rates: Vec<EscapeRate>,
    pub cells: Vec<AggregateCell>,
}

impl Aggregate {
    pub fn from_summaries(plan_sweep: Option<&crate::config::Sweep>, summaries: &[CellSummary]) -> Aggregate {
        let mut cells: Vec<AggregateCell> = summaries
            .iter()
            .map(|s| AggregateCell {
                run_id: s.run_id.clone(),
                problem: s.problem.clone(),
                optimizer: s.optimizer.clone(),
                perturbs: s.perturbs,
                seed: s.seed,
                eps: s.eps,
                n: s.n,
                failed: s.failed,
                sfo: s.sfo,
                sfo_to_fosp: s.sfo_to_fosp,
                sfo_to_sosp: s.sfo_to_sosp,
                f_final: s.f_final,
                escaped: s.escaped,
                trace: format!("{}/trace.csv", s.run_id),
            })
            .collect();
        cells.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        let mut by_opt: BTreeMap<(String, bool), (usize, usize)> = BTreeMap::new();
        for c in &cells {
            if let Some(e) = c.escaped {
                let entry = by_opt.entry((c.optimizer.clone(), c.perturbs)).or_default();
                entry.0 += e as usize;
                entry.1 += 1;
            }
        }
        let escape_rates = by_opt
            .into_iter()
            .map(|((optimizer, perturbs), (k, t))| EscapeRate {
                optimizer,
                perturbs,
                escaped: k,
                trials: t,
                rate: k as f64 / t as f64,
                ci: wilson_interval(k, t),
            })
            .collect();
        let (sweep_axis, sweep_values) = match plan_sweep {
            Some(crate::config::Sweep::Eps(g)) => (Some("eps".into()), g.clone()),
            Some(crate::config::Sweep::N(g)) => (Some("n".into()), g.iter().map(|&n| n as f64).collect()),
            None => (None, Vec::new()),
        };
        Aggregate {
            sweep_axis,
            sweep_values,
            total_sfo: cells.iter().map(|c| c.sfo).sum(),
            failed: cells.iter().filter(|c| c.failed).count(),
            escape_rates,
            cells,
        }
    }

    pub fn load(path: &Path) -> Result<Aggregate> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn initial_point(cell: &Cell, inst: &ProblemInstance) -> ParamVector {
    let d = inst.dim();
    match cell.problem.init {
        Init::Zeros => ParamVector::zeros(d),
        Init::Gaussian => {
            let mut r = RngStream::new(cell.seed, streams::INIT);
            let s = cell.problem.init_scale;
            (0..d).map(|_| s * r.standard_normal()).collect::<Vec<_>>().into()
        }
        Init::Saddle => inst.saddle_points[0].x.clone(),
    }
}

/// Runs one cell in memory.
pub fn execute_cell(cell: &Cell, inst: &ProblemInstance) -> (CellSummary, SsrgdOutcome) {
    let start = Instant::now();
    let p = inst.problem.as_ref();
    let x0 = initial_point(cell, inst);
    let (eps, delta) = (cell.resolved.eps(), cell.resolved.delta());
    let result = match &cell.resolved {
        Resolved::Ssrgd { config } => {
            let cert = SospCertifier::new(eps, delta);
            let hooks = RunHooks {
                certifier: cell.stop_at_sosp.then_some(&cert as &dyn ssrgd::ssrgd::Certifier),
                observer: None,
            };
            run_ssrgd_with(p, config, &x0, hooks)
        }
        Resolved::Baseline {
            kind,
            budget,
            stop_at_fosp,
            ..
        } => {
            let mut rng = RngStream::new(cell.seed, streams::MINIBATCH);
            run_baseline_until(kind, p, &x0, *budget, stop_at_fosp.then_some(eps), &mut rng)
        }
    };
    let (outcome, error) = match result {
        Ok(o) => (o, None),
        Err(f) => (*f.partial, Some(f.error.to_string())),
    };
    let mut warnings = outcome.warnings.clone();
    let f_initial = p.value(&x0);
    let f_final = p.value(&outcome.final_x);
    let mut error = error;
    if error.is_none() && !(f_final.is_finite() && outcome.final_x.is_finite()) {
        error = Some("non-finite final iterate".into());
    }
    let certificate = if error.is_none() {
        match certify(p, &outcome.final_x, eps, delta) {
            Ok(c) => Some(c),
            Err(e) => {
                warnings.push(format!("final certificate unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let sfo_to_sosp = first_certified_sosp(p, &outcome, eps, delta, &mut warnings);
    // Same margin for every optimizer so escape rates are comparable.
    let escaped = (cell.problem.init == Init::Saddle && error.is_none()).then(|| {
        let rho = p.smoothness().lipschitz_hess;
        let margin = cell.optimizer.logfactor * delta.powi(3) / (rho * rho);
        f_final < f_initial - margin
    });
    let summary = CellSummary {
        run_id: cell.run_id.clone(),
        problem: cell.problem.name.clone(),
        optimizer: cell.optimizer.name.clone(),
        optimizer_kind: cell.optimizer.kind,
        second_order: cell.optimizer.second_order,
        perturbs: cell.resolved.perturbs(),
        seed: cell.seed,
        eps,
        delta,
        n: match p.mode() {
            Mode::FiniteSum { n } => Some(n),
            Mode::Online => None,
        },
        d: p.dim(),
        failed: error.is_some(),
        error,
        termination: Some(outcome.termination),
        sfo: outcome.sfo.raw,
        sfo_paper: outcome.sfo.paper,
        sfo_to_fosp: outcome.sfo_to_fosp(eps),
        sfo_to_sosp,
        f_initial,
        f_final,
        final_x: outcome.final_x.clone(),
        certificate,
        perturbations: outcome.perturbations.len(),
        escaped,
        warnings,
        resolved: cell.resolved.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    (summary, outcome)
}

/// Raw SFO at the first super-epoch trigger point the certifier accepts.
fn first_certified_sosp(
    p: &dyn ssrgd::Problem,
    outcome: &SsrgdOutcome,
    eps: f64,
    delta: f64,
    warnings: &mut Vec<String>,
) -> Option<u64> {
    for (iter, x) in outcome.sosp_candidates.iter().take(MAX_SOSP_CHECKS) {
        match certify(p, x, eps, delta) {
            Ok(c) if c.is_sosp => {
                return outcome.trace.iter().find(|r| r.iter >= *iter).map(|r| r.sfo);
            }
            Ok(_) => {}
            Err(e) => {
                warnings.push(format!("candidate certification failed: {e}"));
                return None;
            }
        }
    }
    None
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub aggregate: Aggregate,
    pub aggregate_path: PathBuf,
    pub summaries: Vec<CellSummary>,
}

/// Runs every cell on `workers` threads and writes traces, summaries and the
/// aggregate under the plan's output directory.
pub fn run_plan(plan: &ExperimentPlan, workers: usize) -> Result<PlanResult> {
    let dir = &plan.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let instances = build_instances(&plan.cells)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellSummary>>>> =
        Mutex::new(std::iter::repeat_with(|| None).take(plan.cells.len()).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(plan.cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = plan.cells.get(i) else { break };
                let key = serde_json::to_string(&cell.problem).expect("problem spec serializes");
                let inst = &instances[&key];
                let res = run_and_persist(cell, inst, dir);
                results.lock().unwrap()[i] = Some(res);
            });
        }
    });
    let summaries = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Aggregate::from_summaries(plan.sweep.as_ref(), &summaries);
    let aggregate_path = dir.join("aggregate.json");
    write_json(&aggregate_path, &aggregate)?;
    Ok(PlanResult {
        aggregate,
        aggregate_path,
        summaries,
    })
}

fn run_and_persist(cell: &Cell, inst: &ProblemInstance, dir: &Path) -> Result<CellSummary> {
    let (summary, outcome) = execute_cell(cell, inst);
    if let Some(e) = &summary.error {
        log::warn!("cell {} ({} / {}) failed: {e}", cell.run_id, summary.problem, summary.optimizer);
    }
    let cell_dir = dir.join(&cell.run_id);
    std::fs::create_dir_all(&cell_dir).map_err(io_err(&cell_dir))?;
    write_trace(&cell_dir.join("trace.csv"), &outcome.trace)?;
    write_json(&cell_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Parses a checkpoint JSON holding either `final_x` or `x`.
pub fn read_checkpoint(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let arr = v
        .get("final_x")
        .or_else(|| v.get("x"))
        .or(if v.is_array() { Some(&v) } else { None })
        .ok_or_else(|| HarnessError::Config(format!("{}: no `final_x` or `x` field", path.display())))?;
    Ok(serde_json::from_value(arr.clone())?)
}
