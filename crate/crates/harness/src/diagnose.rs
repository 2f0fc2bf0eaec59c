//! `diagnose` subcommands. Each takes the first SSRGD cell of a config and
//! prints a JSON report.

use serde::Serialize;
use ssrgd::diagnostics::{
    localization_frequency, run_coupled_experiment, verify_epoch_decrease, verify_localization,
    verify_variance_bound, CoupledParams,
};
use ssrgd::rng::{streams, RngStream};
use ssrgd::ssrgd::{run_ssrgd, run_update_steps};
use ssrgd::RunConfig;

use crate::config::{Cell, ExperimentPlan, Resolved};
use crate::error::{HarnessError, Result};
use crate::runner::initial_point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    Variance,
    Epoch,
    Coupled,
    Localization,
}

#[derive(Clone, Debug)]
pub struct DiagnoseOptions {
    /// Monte Carlo replications; 0 asks the variance check to enumerate.
    pub replications: usize,
    /// Steps for the variance trajectory, epochs for the epoch check,
    /// seeds for localization, pairs for the coupled experiment.
    pub count: usize,
    pub seed: u64,
    /// `C′` for localization.
    pub c_prime: f64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            replications: 2000,
            count: 0,
            seed: 0,
            c_prime: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseOutput {
    pub diagnostic: String,
    pub problem: String,
    pub pass: bool,
    pub report: serde_json::Value,
}

fn first_ssrgd(plan: &ExperimentPlan) -> Result<(&Cell, RunConfig)> {
    plan.cells
        .iter()
        .find_map(|c| match &c.resolved {
            Resolved::Ssrgd { config } => Some((c, config.clone())),
            _ => None,
        })
        .ok_or_else(|| HarnessError::Config("diagnose needs an [[optimizer]] with kind = \"ssrgd\"".into()))
}

pub fn diagnose(plan: &ExperimentPlan, which: Diagnostic, opts: &DiagnoseOptions) -> Result<DiagnoseOutput> {
    let (cell, mut cfg) = first_ssrgd(plan)?;
    let inst = cell.problem.build()?;
    let p = inst.problem.as_ref();
    let x0 = initial_point(cell, &inst);
    let needs_second = |name: &str| -> Result<()> {
        if cfg.second_order {
            Ok(())
        } else {
            Err(HarnessError::Config(format!("{name} needs an ssrgd optimizer with order = \"second\"")))
        }
    };
    let (name, pass, report) = match which {
        Diagnostic::Variance => {
            let steps = if opts.count == 0 { cfg.epoch_len } else { opts.count };
            let mut batches = RngStream::new(opts.seed, streams::MINIBATCH);
            let traj = run_update_steps(p, &cfg, &x0, steps as u64, &mut batches, |_| {})?;
            let mut rng = RngStream::new(opts.seed, streams::CERTIFY);
            let rep = verify_variance_bound(p, &traj, cfg.minibatch, opts.replications, &mut rng)?;
            ("variance", rep.all_pass, serde_json::to_value(&rep)?)
        }
        Diagnostic::Epoch => {
            let epochs = if opts.count == 0 { 5 } else { opts.count };
            let mut rng = RngStream::new(opts.seed, streams::MINIBATCH);
            let rep = verify_epoch_decrease(p, &cfg, &x0, epochs, opts.replications, &mut rng)?;
            ("epoch", rep.all_pass, serde_json::to_value(&rep)?)
        }
        Diagnostic::Coupled => {
            needs_second("coupled")?;
            let saddle = inst
                .saddle_points
                .first()
                .ok_or_else(|| HarnessError::Config(format!("problem `{}` lists no saddle point", cell.problem.name)))?;
            let params = CoupledParams {
                pairs: if opts.count == 0 { 100 } else { opts.count },
                seed: opts.seed,
                ..CoupledParams::default()
            };
            let rep = run_coupled_experiment(&inst, &saddle.x, &cfg, &params)?;
            let pass = rep.escape_frequency >= 0.9 && rep.digests_match;
            ("coupled", pass, serde_json::to_value(&rep)?)
        }
        Diagnostic::Localization => {
            needs_second("localization")?;
            let l = p.smoothness().lipschitz_grad;
            cfg.eta = cfg.eta.min(1.0 / (2.0 * opts.c_prime * l));
            cfg.record_super_epochs = true;
            let seeds = if opts.count == 0 { 50 } else { opts.count };
            let mut reports = Vec::new();
            for k in 0..seeds as u64 {
                cfg.seed = opts.seed + k;
                let out = run_ssrgd(p, &cfg, &x0).map_err(|f| HarnessError::Core(f.error))?;
                if let Some(se) = out.super_epochs.first() {
                    reports.push(verify_localization(se, &cfg, l, opts.c_prime)?);
                }
            }
            let (freq, ci) = localization_frequency(&reports);
            let report = serde_json::json!({
                "c_prime": opts.c_prime,
                "eta": cfg.eta,
                "seeds": seeds,
                "super_epochs": reports.len(),
                "frequency": freq,
                "ci": ci,
                "reports": reports,
            });
            ("localization", !reports.is_empty() && freq >= 0.9, report)
        }
    };
    Ok(DiagnoseOutput {
        diagnostic: name.into(),
        problem: cell.problem.name.clone(),
        pass,
        report,
    })
}
