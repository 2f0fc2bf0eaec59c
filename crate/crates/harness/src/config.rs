//! Experiment configuration: a TOML file with `[[problem]]`, `[[optimizer]]`,
//! `[sweep]` and `[output]` sections.
//!
//! ```toml
//! [[problem]]
//! kind = "nonconvex_logistic"
//! n = 4096
//! d = 20
//!
//! [[optimizer]]
//! kind = "ssrgd"
//! eps = 0.01
//!
//! [sweep]
//! seeds = [0, 1, 2]
//! eps_grid = [0.1, 0.05, 0.025]
//!
//! [output]
//! dir = "results"
//! plot = true
//! ```
//!
//! Optimizer parameters left out are derived from the problem's smoothness
//! constants by the `ssrgd::ssrgd::derive_config_*` functions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssrgd::baselines::BaselineKind;
use ssrgd::problem::{Mode, ProblemInstance};
use ssrgd::problems::{
    load_libsvm, make_nonconvex_logistic, make_online_stream, make_separable_saddle, QuadraticSum,
};
use ssrgd::ssrgd::{
    derive_config_first_order, derive_config_online_first_order, derive_config_online_second_order,
    derive_config_second_order,
};
use ssrgd::RunConfig;
use toml::Value;

use crate::error::{io_err, HarnessError, Result};

pub const DEFAULT_CELL_CAP: usize = 10_000;
pub const DEFAULT_EPS: f64 = 0.01;

const TOP_KEYS: &[&str] = &["problem", "optimizer", "sweep", "output"];
const PROBLEM_KEYS: &[&str] = &[
    "kind", "name", "n", "d", "alpha", "seed", "delta_plant", "noise", "path", "d_cap", "sigma",
    "noise_seed", "init", "init_scale",
];
const OPTIMIZER_KEYS: &[&str] = &[
    "kind", "name", "order", "eps", "delta", "logfactor", "eta", "epoch_len", "minibatch", "batch",
    "perturb_radius", "g_thres", "f_thres", "super_epoch_len", "sfo_budget", "stop_at_fosp",
    "stop_at_sosp", "max_epochs",
];
const SWEEP_KEYS: &[&str] = &["seeds", "seed_count", "eps_grid", "n_grid", "cap"];
const OUTPUT_KEYS: &[&str] = &["dir", "plot"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    SeparableSaddle {
        d: usize,
        n: usize,
        delta_plant: f64,
        noise: f64,
        seed: u64,
    },
    NonconvexLogistic {
        n: usize,
        d: usize,
        alpha: f64,
        seed: u64,
    },
    Libsvm {
        path: PathBuf,
        d_cap: usize,
        alpha: f64,
    },
    Quadratic {
        n: usize,
        d: usize,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// `N(0, scale² I)` from the seed's init stream.
    Gaussian,
    /// First listed saddle point of the problem.
    Saddle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineSpec {
    pub sigma: f64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub kind: ProblemKind,
    pub online: Option<OnlineSpec>,
    pub init: Init,
    pub init_scale: f64,
}

impl ProblemSpec {
    pub fn n(&self) -> Option<usize> {
        match self.kind {
            ProblemKind::SeparableSaddle { n, .. }
            | ProblemKind::NonconvexLogistic { n, .. }
            | ProblemKind::Quadratic { n, .. } => Some(n),
            ProblemKind::Libsvm { .. } => None,
        }
    }

    fn with_n(&self, n: usize) -> Result<ProblemSpec> {
        let mut out = self.clone();
        match &mut out.kind {
            ProblemKind::SeparableSaddle { n: k, .. }
            | ProblemKind::NonconvexLogistic { n: k, .. }
            | ProblemKind::Quadratic { n: k, .. } => *k = n,
            ProblemKind::Libsvm { .. } => {
                return Err(HarnessError::Config(format!(
                    "problem `{}`: n_grid cannot resize a dataset loaded from file",
                    self.name
                )))
            }
        }
        Ok(out)
    }

    /// Materializes the problem.
    pub fn build(&self) -> Result<ProblemInstance> {
        let base = match &self.kind {
            ProblemKind::SeparableSaddle {
                d,
                n,
                delta_plant,
                noise,
                seed,
            } => make_separable_saddle(*d, *n, *delta_plant, *noise, *seed)?,
            ProblemKind::NonconvexLogistic { n, d, alpha, seed } => make_nonconvex_logistic(*n, *d, *alpha, *seed)?,
            ProblemKind::Libsvm { path, d_cap, alpha } => load_libsvm(path, *d_cap, *alpha)?,
            ProblemKind::Quadratic { n, d, seed } => {
                ProblemInstance::new("quadratic", std::sync::Arc::new(QuadraticSum::random(*n, *d, *seed)))
                    .with_param("n", *n)
                    .with_param("d", *d)
                    .with_param("seed", *seed)
            }
        };
        match &self.online {
            Some(o) => Ok(make_online_stream(&base, o.sigma, o.noise_seed)?),
            None => Ok(base),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Ssrgd,
    Gd,
    PerturbedGd,
    Sgd,
    Svrg,
}

impl OptimizerKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ssrgd" => OptimizerKind::Ssrgd,
            "gd" => OptimizerKind::Gd,
            "perturbed_gd" => OptimizerKind::PerturbedGd,
            "sgd" => OptimizerKind::Sgd,
            "svrg" => OptimizerKind::Svrg,
            _ => return None,
        })
    }
}

/// Explicit settings; anything `None` is derived.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub eta: Option<f64>,
    pub epoch_len: Option<usize>,
    pub minibatch: Option<usize>,
    pub batch: Option<usize>,
    pub perturb_radius: Option<f64>,
    pub g_thres: Option<f64>,
    pub f_thres: Option<f64>,
    pub super_epoch_len: Option<u64>,
    pub sfo_budget: Option<u64>,
    pub stop_at_fosp: Option<bool>,
    pub max_epochs: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub name: String,
    pub kind: OptimizerKind,
    pub second_order: bool,
    pub eps: f64,
    /// `None` means `√(ρ ε)`.
    pub delta: Option<f64>,
    pub logfactor: f64,
    /// Stop SSRGD at the first super-epoch trigger the dense certifier accepts.
    pub stop_at_sosp: bool,
    pub overrides: Overrides,
}

/// Fully resolved optimizer settings for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Resolved {
    Ssrgd { config: RunConfig },
    Baseline {
        kind: BaselineKind,
        budget: u64,
        eps: f64,
        delta: f64,
        #[serde(default)]
        stop_at_fosp: bool,
    },
}

impl Resolved {
    pub fn eps(&self) -> f64 {
        match self {
            Resolved::Ssrgd { config } => config.eps,
            Resolved::Baseline { eps, .. } => *eps,
        }
    }

    pub fn delta(&self) -> f64 {
        match self {
            Resolved::Ssrgd { config } => config.delta,
            Resolved::Baseline { delta, .. } => *delta,
        }
    }

    pub fn budget(&self) -> u64 {
        match self {
            Resolved::Ssrgd { config } => config.sfo_budget,
            Resolved::Baseline { budget, .. } => *budget,
        }
    }

    /// Whether the optimizer perturbs near small gradients.
    pub fn perturbs(&self) -> bool {
        match self {
            Resolved::Ssrgd { config } => config.second_order,
            Resolved::Baseline { kind, .. } => matches!(kind, BaselineKind::PerturbedGd { .. }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub run_id: String,
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    pub resolved: Resolved,
    pub stop_at_sosp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    Eps(Vec<f64>),
    N(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub problems: Vec<ProblemSpec>,
    pub optimizers: Vec<OptimizerSpec>,
    pub seeds: Vec<u64>,
    pub sweep: Option<Sweep>,
    pub output_dir: PathBuf,
    pub plot: bool,
    pub cell_cap: usize,
    pub cells: Vec<Cell>,
}

pub fn parse_config(path: &Path) -> Result<ExperimentPlan> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentPlan> {
    let root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| HarnessError::Config(format!("invalid TOML: {}", e.message())))?;
    check_keys(&root, TOP_KEYS, "top level")?;

    let problems = section_array(&root, "problem")?
        .iter()
        .enumerate()
        .map(|(i, t)| parse_problem(t, i + 1, base_dir))
        .collect::<Result<Vec<_>>>()?;
    let optimizers = section_array(&root, "optimizer")?
        .iter()
        .enumerate()
        .map(|(i, t)| parse_optimizer(t, i + 1))
        .collect::<Result<Vec<_>>>()?;

    let empty = toml::Table::new();
    let sweep_t = optional_table(&root, "sweep")?.unwrap_or(&empty);
    check_keys(sweep_t, SWEEP_KEYS, "[sweep]")?;
    let ctx = "[sweep]";
    let seeds = match (get_u64_list(sweep_t, "seeds", ctx)?, get_u64(sweep_t, "seed_count", ctx)?) {
        (Some(_), Some(_)) => {
            return Err(HarnessError::Config("[sweep]: give either `seeds` or `seed_count`, not both".into()))
        }
        (Some(s), None) => s,
        (None, Some(k)) => (0..k).collect(),
        (None, None) => vec![0],
    };
    if seeds.is_empty() {
        return Err(HarnessError::Config("[sweep]: seed list is empty".into()));
    }
    let eps_grid = get_f64_list(sweep_t, "eps_grid", ctx)?;
    let n_grid = get_u64_list(sweep_t, "n_grid", ctx)?;
    let sweep = match (eps_grid, n_grid) {
        (Some(_), Some(_)) => {
            return Err(HarnessError::Config("[sweep]: only one of `eps_grid` and `n_grid` may be set".into()))
        }
        (Some(g), None) => {
            if g.is_empty() || g.iter().any(|&e| !(e > 0.0)) {
                return Err(HarnessError::Config("[sweep]: eps_grid entries must satisfy eps > 0".into()));
            }
            Some(Sweep::Eps(g))
        }
        (None, Some(g)) => {
            if g.is_empty() || g.contains(&0) {
                return Err(HarnessError::Config("[sweep]: n_grid entries must be positive".into()));
            }
            Some(Sweep::N(g.into_iter().map(|v| v as usize).collect()))
        }
        (None, None) => None,
    };
    let cell_cap = get_u64(sweep_t, "cap", ctx)?.map_or(DEFAULT_CELL_CAP, |c| c as usize);

    let out_t = optional_table(&root, "output")?.unwrap_or(&empty);
    check_keys(out_t, OUTPUT_KEYS, "[output]")?;
    let dir = get_str(out_t, "dir", "[output]")?.unwrap_or("results");
    let output_dir = base_dir.join(dir);
    let plot = get_bool(out_t, "plot", "[output]")?.unwrap_or(true);

    let mut plan = ExperimentPlan {
        problems,
        optimizers,
        seeds,
        sweep,
        output_dir,
        plot,
        cell_cap,
        cells: Vec::new(),
    };
    plan.cells = expand_cells(&plan)?;
    Ok(plan)
}

/// Reads the first `[[problem]]` of a TOML file. Other sections are checked
/// for unknown top-level names but otherwise ignored.
pub fn parse_problem_file(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| HarnessError::Config(format!("invalid TOML: {}", e.message())))?;
    check_keys(&root, TOP_KEYS, "top level")?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let first = section_array(&root, "problem")?[0];
    parse_problem(first, 1, base)
}

fn expand_cells(plan: &ExperimentPlan) -> Result<Vec<Cell>> {
    let n_axis = match &plan.sweep {
        Some(Sweep::N(g)) => g.iter().map(|&n| Some(n)).collect(),
        _ => vec![None],
    };
    let eps_axis: Vec<Option<f64>> = match &plan.sweep {
        Some(Sweep::Eps(g)) => g.iter().map(|&e| Some(e)).collect(),
        _ => vec![None],
    };
    let count = plan.problems.len() * n_axis.len() * plan.optimizers.len() * eps_axis.len() * plan.seeds.len();
    if count > plan.cell_cap {
        return Err(HarnessError::Config(format!(
            "plan has {count} cells, above the cap of {} (raise [sweep] cap)",
            plan.cell_cap
        )));
    }
    let mut cells = Vec::with_capacity(count);
    for prob in &plan.problems {
        for n in &n_axis {
            let p = match n {
                Some(n) => prob.with_n(*n)?,
                None => prob.clone(),
            };
            let inst = p.build()?;
            if p.init == Init::Saddle && inst.saddle_points.is_empty() {
                return Err(HarnessError::Config(format!(
                    "problem `{}`: init = \"saddle\" but the problem lists no saddle point",
                    p.name
                )));
            }
            for opt in &plan.optimizers {
                for eps in &eps_axis {
                    let mut o = opt.clone();
                    if let Some(e) = eps {
                        o.eps = *e;
                    }
                    for &seed in &plan.seeds {
                        let resolved = resolve(&inst, &o, seed)
                            .map_err(|e| HarnessError::Config(format!("optimizer `{}` on `{}`: {e}", o.name, p.name)))?;
                        let run_id = run_id(&p, &o, seed, &resolved);
                        cells.push(Cell {
                            run_id,
                            problem: p.clone(),
                            stop_at_sosp: o.stop_at_sosp,
                            optimizer: o.clone(),
                            seed,
                            resolved,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// First 16 hex digits of the SHA-256 of the cell's canonical JSON.
pub fn run_id(problem: &ProblemSpec, optimizer: &OptimizerSpec, seed: u64, resolved: &Resolved) -> String {
    let payload = serde_json::json!({
        "problem": problem,
        "optimizer": optimizer,
        "seed": seed,
        "resolved": resolved,
    });
    let digest = Sha256::digest(payload.to_string().as_bytes());
    hex::encode(&digest[..8])
}

/// Derives the optimizer settings for one problem and seed.
pub fn resolve(inst: &ProblemInstance, opt: &OptimizerSpec, seed: u64) -> ssrgd::Result<Resolved> {
    let p = inst.problem.as_ref();
    let online = p.mode() == Mode::Online;
    let eps = opt.eps;
    let delta = match opt.delta {
        Some(d) => d,
        None => (p.smoothness().lipschitz_hess * eps).sqrt(),
    };
    let wants_second = opt.second_order || opt.kind == OptimizerKind::PerturbedGd;
    let mut cfg = match (online, wants_second) {
        (false, false) => derive_config_first_order(p, eps)?,
        (false, true) => derive_config_second_order(p, eps, delta, opt.logfactor)?,
        (true, false) => derive_config_online_first_order(p, eps)?,
        (true, true) => derive_config_online_second_order(p, eps, delta, opt.logfactor)?,
    };
    let o = &opt.overrides;
    macro_rules! apply {
        ($($f:ident),*) => { $( if let Some(v) = o.$f { cfg.$f = v; } )* };
    }
    apply!(eta, epoch_len, minibatch, batch, perturb_radius, g_thres, f_thres, super_epoch_len, sfo_budget);
    cfg.max_epochs = o.max_epochs;
    cfg.seed = seed;
    cfg.stop_at_fosp = o.stop_at_fosp.unwrap_or(!wants_second);
    if !wants_second {
        cfg.delta = delta;
    }
    let eta = cfg.eta;
    let kind = match opt.kind {
        OptimizerKind::Ssrgd => {
            cfg.validate(p)?;
            return Ok(Resolved::Ssrgd { config: cfg });
        }
        OptimizerKind::Gd => BaselineKind::Gd { eta },
        OptimizerKind::PerturbedGd => BaselineKind::PerturbedGd {
            eta,
            radius: cfg.perturb_radius,
            g_thres: cfg.g_thres,
            f_thres: cfg.f_thres,
            escape_len: cfg.super_epoch_len,
        },
        OptimizerKind::Sgd => BaselineKind::Sgd {
            eta,
            minibatch: cfg.minibatch,
        },
        OptimizerKind::Svrg => BaselineKind::Svrg {
            eta,
            minibatch: cfg.minibatch,
            epoch_len: cfg.epoch_len,
        },
    };
    kind.validate(p)?;
    Ok(Resolved::Baseline {
        kind,
        budget: cfg.sfo_budget,
        eps,
        delta: cfg.delta,
        stop_at_fosp: cfg.stop_at_fosp,
    })
}

fn parse_problem(t: &toml::Table, idx: usize, base_dir: &Path) -> Result<ProblemSpec> {
    let ctx = format!("[[problem]] #{idx}");
    let ctx = ctx.as_str();
    check_keys(t, PROBLEM_KEYS, ctx)?;
    let kind_s = get_str(t, "kind", ctx)?.ok_or_else(|| missing("kind", ctx))?;
    let usize_or = |k: &str, dflt: usize| -> Result<usize> { Ok(get_u64(t, k, ctx)?.map_or(dflt, |v| v as usize)) };
    let f64_or = |k: &str, dflt: f64| -> Result<f64> { Ok(get_f64(t, k, ctx)?.unwrap_or(dflt)) };
    let seed = get_u64(t, "seed", ctx)?.unwrap_or(0);
    let allowed: &[&str] = match kind_s {
        "separable_saddle" => &["d", "n", "delta_plant", "noise", "seed"],
        "nonconvex_logistic" => &["n", "d", "alpha", "seed"],
        "libsvm" => &["path", "d_cap", "alpha"],
        "quadratic" => &["n", "d", "seed"],
        other => {
            return Err(HarnessError::Config(format!(
                "{ctx}: unknown problem kind `{other}`{}",
                suggest(other, &["separable_saddle", "nonconvex_logistic", "libsvm", "quadratic"])
            )))
        }
    };
    for key in ["n", "d", "alpha", "seed", "delta_plant", "noise", "path", "d_cap"] {
        if t.contains_key(key) && !allowed.contains(&key) {
            return Err(HarnessError::Config(format!("{ctx}: key `{key}` does not apply to kind `{kind_s}`")));
        }
    }
    let kind = match kind_s {
        "separable_saddle" => ProblemKind::SeparableSaddle {
            d: usize_or("d", 10)?,
            n: usize_or("n", 64)?,
            delta_plant: f64_or("delta_plant", 0.3)?,
            noise: f64_or("noise", 0.1)?,
            seed,
        },
        "nonconvex_logistic" => ProblemKind::NonconvexLogistic {
            n: usize_or("n", 4096)?,
            d: usize_or("d", 20)?,
            alpha: f64_or("alpha", ssrgd::problems::DEFAULT_ALPHA)?,
            seed,
        },
        "libsvm" => {
            let rel = get_str(t, "path", ctx)?.ok_or_else(|| missing("path", ctx))?;
            ProblemKind::Libsvm {
                path: base_dir.join(rel),
                d_cap: usize_or("d_cap", 10_000)?,
                alpha: f64_or("alpha", ssrgd::problems::DEFAULT_ALPHA)?,
            }
        }
        _ => ProblemKind::Quadratic {
            n: usize_or("n", 16)?,
            d: usize_or("d", 5)?,
            seed,
        },
    };
    let online = match (get_f64(t, "sigma", ctx)?, get_u64(t, "noise_seed", ctx)?) {
        (Some(sigma), ns) => {
            if !(sigma >= 0.0) {
                return Err(HarnessError::Config(format!("{ctx}: sigma must satisfy sigma >= 0")));
            }
            Some(OnlineSpec {
                sigma,
                noise_seed: ns.unwrap_or(0),
            })
        }
        (None, Some(_)) => return Err(HarnessError::Config(format!("{ctx}: `noise_seed` needs `sigma`"))),
        (None, None) => None,
    };
    let default_init = if kind_s == "separable_saddle" { "saddle" } else { "gaussian" };
    let init = match get_str(t, "init", ctx)?.unwrap_or(default_init) {
        "zeros" => Init::Zeros,
        "gaussian" => Init::Gaussian,
        "saddle" => Init::Saddle,
        other => {
            return Err(HarnessError::Config(format!(
                "{ctx}: unknown init `{other}`{}",
                suggest(other, &["zeros", "gaussian", "saddle"])
            )))
        }
    };
    let name = match get_str(t, "name", ctx)? {
        Some(s) => s.to_string(),
        None => match kind.clone() {
            ProblemKind::Libsvm { path, .. } => format!(
                "libsvm-{}",
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            ),
            _ => format!("{kind_s}-{idx}"),
        },
    };
    Ok(ProblemSpec {
        name,
        kind,
        online,
        init,
        init_scale: f64_or("init_scale", 1.0)?,
    })
}

fn parse_optimizer(t: &toml::Table, idx: usize) -> Result<OptimizerSpec> {
    let ctx = format!("[[optimizer]] #{idx}");
    let ctx = ctx.as_str();
    check_keys(t, OPTIMIZER_KEYS, ctx)?;
    let kind_s = get_str(t, "kind", ctx)?.ok_or_else(|| missing("kind", ctx))?;
    let kind = OptimizerKind::parse(kind_s).ok_or_else(|| {
        HarnessError::Config(format!(
            "{ctx}: unknown optimizer kind `{kind_s}`{}",
            suggest(kind_s, &["ssrgd", "gd", "perturbed_gd", "sgd", "svrg"])
        ))
    })?;
    let second_order = match get_str(t, "order", ctx)? {
        None | Some("first") => false,
        Some("second") => true,
        Some(other) => {
            return Err(HarnessError::Config(format!(
                "{ctx}: order must be \"first\" or \"second\", got `{other}`"
            )))
        }
    };
    if second_order && kind != OptimizerKind::Ssrgd {
        return Err(HarnessError::Config(format!("{ctx}: `order` only applies to ssrgd")));
    }
    let positive = |k: &str| -> Result<Option<f64>> {
        match get_f64(t, k, ctx)? {
            Some(v) if !(v > 0.0) || !v.is_finite() => {
                Err(HarnessError::Config(format!("{ctx}: {k} must satisfy {k} > 0, got {v}")))
            }
            v => Ok(v),
        }
    };
    let nonneg = |k: &str| -> Result<Option<f64>> {
        match get_f64(t, k, ctx)? {
            Some(v) if !(v >= 0.0) || !v.is_finite() => {
                Err(HarnessError::Config(format!("{ctx}: {k} must satisfy {k} >= 0, got {v}")))
            }
            v => Ok(v),
        }
    };
    let count = |k: &str| -> Result<Option<usize>> {
        match get_u64(t, k, ctx)? {
            Some(0) => Err(HarnessError::Config(format!("{ctx}: {k} must be positive"))),
            v => Ok(v.map(|v| v as usize)),
        }
    };
    let overrides = Overrides {
        eta: positive("eta")?,
        epoch_len: count("epoch_len")?,
        minibatch: count("minibatch")?,
        batch: count("batch")?,
        perturb_radius: nonneg("perturb_radius")?,
        g_thres: nonneg("g_thres")?,
        f_thres: nonneg("f_thres")?,
        super_epoch_len: get_u64(t, "super_epoch_len", ctx)?,
        sfo_budget: get_u64(t, "sfo_budget", ctx)?,
        stop_at_fosp: get_bool(t, "stop_at_fosp", ctx)?,
        max_epochs: get_u64(t, "max_epochs", ctx)?,
    };
    let name = match get_str(t, "name", ctx)? {
        Some(s) => s.to_string(),
        None if kind == OptimizerKind::Ssrgd && second_order => "ssrgd-second".into(),
        None => kind_s.to_string(),
    };
    Ok(OptimizerSpec {
        name,
        kind,
        second_order,
        eps: positive("eps")?.unwrap_or(DEFAULT_EPS),
        delta: positive("delta")?,
        logfactor: positive("logfactor")?.unwrap_or(1.0),
        stop_at_sosp: get_bool(t, "stop_at_sosp", ctx)?.unwrap_or(false),
        overrides,
    })
}

// ------------------------------------------------------------ table helpers

fn missing(key: &str, ctx: &str) -> HarnessError {
    HarnessError::Config(format!("{ctx}: missing required key `{key}`"))
}

fn suggest(key: &str, valid: &[&str]) -> String {
    valid
        .iter()
        .map(|v| (strsim::levenshtein(key, v), *v))
        .min()
        .map(|(_, v)| format!("; did you mean `{v}`?"))
        .unwrap_or_default()
}

fn check_keys(t: &toml::Table, valid: &[&str], ctx: &str) -> Result<()> {
    for key in t.keys() {
        if !valid.contains(&key.as_str()) {
            return Err(HarnessError::Config(format!(
                "{ctx}: unknown key `{key}`{}",
                suggest(key, valid)
            )));
        }
    }
    Ok(())
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

fn type_err(key: &str, ctx: &str, expected: &str, found: &Value) -> HarnessError {
    HarnessError::Config(format!(
        "{ctx}: key `{key}` expected {expected}, found {}",
        type_name(found)
    ))
}

fn section_array<'a>(root: &'a toml::Table, key: &str) -> Result<Vec<&'a toml::Table>> {
    match root.get(key) {
        None => Err(HarnessError::Config(format!("missing required section [[{key}]]"))),
        Some(Value::Array(items)) => {
            if items.is_empty() {
                return Err(HarnessError::Config(format!("section [[{key}]] is empty")));
            }
            items
                .iter()
                .map(|v| v.as_table().ok_or_else(|| type_err(key, "top level", "table", v)))
                .collect()
        }
        Some(Value::Table(t)) => Ok(vec![t]),
        Some(other) => Err(type_err(key, "top level", "array of tables", other)),
    }
}

fn optional_table<'a>(root: &'a toml::Table, key: &str) -> Result<Option<&'a toml::Table>> {
    match root.get(key) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(other) => Err(type_err(key, "top level", "table", other)),
    }
}

fn get_str<'a>(t: &'a toml::Table, key: &str, ctx: &str) -> Result<Option<&'a str>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(type_err(key, ctx, "string", v)),
    }
}

fn get_bool(t: &toml::Table, key: &str, ctx: &str) -> Result<Option<bool>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Boolean(b)) => Ok(Some(*b)),
        Some(v) => Err(type_err(key, ctx, "boolean", v)),
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn get_f64(t: &toml::Table, key: &str, ctx: &str) -> Result<Option<f64>> {
    match t.get(key) {
        None => Ok(None),
        Some(v) => as_f64(v).map(Some).ok_or_else(|| type_err(key, ctx, "number", v)),
    }
}

fn as_u64(v: &Value) -> Option<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as u64),
        _ => None,
    }
}

fn get_u64(t: &toml::Table, key: &str, ctx: &str) -> Result<Option<u64>> {
    match t.get(key) {
        None => Ok(None),
        Some(v) => as_u64(v)
            .map(Some)
            .ok_or_else(|| type_err(key, ctx, "nonnegative integer", v)),
    }
}

fn get_list<T>(
    t: &toml::Table,
    key: &str,
    ctx: &str,
    expected: &str,
    conv: impl Fn(&Value) -> Option<T>,
) -> Result<Option<Vec<T>>> {
    match t.get(key) {
        None => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| conv(v).ok_or_else(|| type_err(key, ctx, expected, v)))
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(v) => Err(type_err(key, ctx, &format!("array of {expected}"), v)),
    }
}

fn get_f64_list(t: &toml::Table, key: &str, ctx: &str) -> Result<Option<Vec<f64>>> {
    get_list(t, key, ctx, "number", as_f64)
}

fn get_u64_list(t: &toml::Table, key: &str, ctx: &str) -> Result<Option<Vec<u64>>> {
    get_list(t, key, ctx, "nonnegative integer", as_u64)
}

/// Builds each distinct problem of the plan once.
pub fn build_instances(cells: &[Cell]) -> Result<BTreeMap<String, ProblemInstance>> {
    let mut out = BTreeMap::new();
    for c in cells {
        let key = serde_json::to_string(&c.problem)?;
        if !out.contains_key(&key) {
            let inst = c.problem.build()?;
            out.insert(key, inst);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentPlan> {
        parse_config_str(text, Path::new("/tmp"))
    }

    const MINIMAL: &str = r#"
[[problem]]
kind = "nonconvex_logistic"
n = 64
d = 4

[[optimizer]]
kind = "ssrgd"
"#;

    #[test]
    fn minimal_config_gets_first_order_defaults() {
        let plan = parse(MINIMAL).unwrap();
        assert_eq!(plan.cells.len(), 1);
        let Resolved::Ssrgd { config } = &plan.cells[0].resolved else {
            panic!("expected ssrgd");
        };
        assert_eq!(config.epoch_len, 8);
        assert_eq!(config.minibatch, 8);
        assert!(!config.second_order);
        assert_eq!(config.eps, DEFAULT_EPS);
        assert_eq!(plan.output_dir, Path::new("/tmp/results"));
    }

    #[test]
    fn eps_grid_multiplies_cells() {
        let text = format!("{MINIMAL}\n[sweep]\nseeds = [1, 2]\neps_grid = [0.1, 0.05, 0.025]\n");
        let plan = parse(&text).unwrap();
        assert_eq!(plan.cells.len(), 6);
        let eps: Vec<f64> = plan.cells.iter().map(|c| c.resolved.eps()).collect();
        assert_eq!(eps, vec![0.1, 0.1, 0.05, 0.05, 0.025, 0.025]);
    }

    #[test]
    fn negative_eta_names_constraint() {
        let text = format!("{MINIMAL}eta = -0.1\n");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("eta > 0"), "{err}");
    }

    #[test]
    fn unknown_key_suggests_nearest() {
        let text = format!("{MINIMAL}etta = 0.1\n");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("`etta`") && err.contains("did you mean `eta`"), "{err}");
    }

    #[test]
    fn type_mismatch_names_expected_type() {
        let text = MINIMAL.replace("n = 64", "n = \"many\"");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("expected nonnegative integer") && err.contains("found string"), "{err}");
    }

    #[test]
    fn missing_optimizer_section() {
        let err = parse("[[problem]]\nkind = \"quadratic\"\n").unwrap_err().to_string();
        assert!(err.contains("[[optimizer]]"), "{err}");
    }

    #[test]
    fn cap_enforced() {
        let text = format!("{MINIMAL}\n[sweep]\nseed_count = 20\ncap = 10\n");
        assert!(parse(&text).unwrap_err().to_string().contains("cap"));
    }

    #[test]
    fn run_ids_are_unique_and_stable() {
        let text = format!("{MINIMAL}\n[sweep]\nseed_count = 4\n");
        let a = parse(&text).unwrap();
        let b = parse(&text).unwrap();
        let ids: Vec<&str> = a.cells.iter().map(|c| c.run_id.as_str()).collect();
        let mut dedup = ids.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 4);
        assert_eq!(ids, b.cells.iter().map(|c| c.run_id.as_str()).collect::<Vec<_>>());
    }

    #[test]
    fn second_order_and_baselines_resolve() {
        let text = r#"
[[problem]]
kind = "separable_saddle"
d = 4
n = 8

[[optimizer]]
kind = "ssrgd"
order = "second"
eps = 0.05
delta = 0.3

[[optimizer]]
kind = "perturbed_gd"
eps = 0.05
delta = 0.3

[[optimizer]]
kind = "svrg"
"#;
        let plan = parse(text).unwrap();
        assert_eq!(plan.cells.len(), 3);
        assert!(plan.cells[0].resolved.perturbs());
        assert!(plan.cells[1].resolved.perturbs());
        assert!(matches!(
            plan.cells[2].resolved,
            Resolved::Baseline {
                kind: BaselineKind::Svrg { .. },
                ..
            }
        ));
        assert_eq!(plan.cells[0].problem.init, Init::Saddle);
    }

    #[test]
    fn n_grid_rebuilds_problem() {
        let text = format!("{MINIMAL}\n[sweep]\nn_grid = [16, 64]\n");
        let plan = parse(&text).unwrap();
        assert_eq!(plan.cells[0].problem.n(), Some(16));
        assert_eq!(plan.cells[1].problem.n(), Some(64));
    }
}
