use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ssrgd::spectral::certify;
use ssrgd_harness::config::{parse_problem_file, DEFAULT_EPS};
use ssrgd_harness::diagnose::{diagnose, DiagnoseOptions, Diagnostic};
use ssrgd_harness::runner::read_checkpoint;
use ssrgd_harness::{emit_plots, parse_config, run_plan, scaling_report, worker_count, Aggregate, Axis, HarnessError};

const EXIT_FAILED_CELL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// SSRGD experiment runner.
///
/// Worker threads for `run` come from the SSRGD_WORKERS environment variable
/// (default: available parallelism).
#[derive(Parser)]
#[command(name = "ssrgd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of an experiment config.
    Run {
        config: PathBuf,
        /// Write output here instead of the config's [output] dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit log-log scaling exponents from an aggregate.json.
    Scaling {
        aggregate: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
    },
    /// Certify a checkpoint (JSON with `final_x` or `x`) on a problem.
    Certify {
        /// TOML file with a [[problem]] section.
        problem: PathBuf,
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        /// Defaults to sqrt(rho * eps).
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run one of the estimator and escape diagnostics on a config's first ssrgd cell.
    Diagnose {
        #[arg(value_enum)]
        which: DiagArg,
        config: PathBuf,
        #[arg(long, default_value_t = 2000)]
        replications: usize,
        /// Steps, epochs, pairs or seeds depending on the diagnostic (0 = default).
        #[arg(long, default_value_t = 0)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        c_prime: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Eps,
    N,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagArg {
    Variance,
    Epoch,
    Coupled,
    Localization,
}

fn exit_for(err: &HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        HarnessError::Config(_) | HarnessError::Core(ssrgd::Error::InvalidConfig(_)) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::from(EXIT_FAILED_CELL),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(v)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(HarnessError::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

/// An unreadable config or problem file is a config error, not a failed run.
fn as_config_error(err: HarnessError) -> HarnessError {
    match err {
        HarnessError::Io { path, source } => HarnessError::Config(format!("{}: {source}", path.display())),
        other => other,
    }
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let mut plan = parse_config(&config).map_err(as_config_error)?;
            if let Some(dir) = out {
                plan.output_dir = dir;
            }
            let workers = worker_count();
            log::info!("{} cells on {workers} workers", plan.cells.len());
            let res = run_plan(&plan, workers)?;
            if plan.plot {
                let files = emit_plots(&res.aggregate, &plan.output_dir, &plan.output_dir.join("plots"))?;
                log::info!("{} plot files", files.len());
            }
            println!(
                "{} cells, {} failed, total SFO {}; aggregate at {}",
                res.aggregate.cells.len(),
                res.aggregate.failed,
                res.aggregate.total_sfo,
                res.aggregate_path.display()
            );
            Ok(if res.aggregate.failed > 0 {
                ExitCode::from(EXIT_FAILED_CELL)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Scaling { aggregate, axis } => {
            let agg = Aggregate::load(&aggregate)?;
            let axis = match axis {
                AxisArg::Eps => Axis::Eps,
                AxisArg::N => Axis::N,
            };
            print_json(&scaling_report(&agg, axis)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify {
            problem,
            checkpoint,
            eps,
            delta,
        } => {
            let spec = parse_problem_file(&problem).map_err(as_config_error)?;
            let inst = spec.build()?;
            let x = read_checkpoint(&checkpoint)?;
            if x.len() != inst.dim() {
                return Err(HarnessError::Config(format!(
                    "checkpoint has dimension {}, problem has {}",
                    x.len(),
                    inst.dim()
                )));
            }
            let p = inst.problem.as_ref();
            let delta = delta.unwrap_or_else(|| (p.smoothness().lipschitz_hess * eps).sqrt());
            let cert = certify(p, &x, eps, delta)?;
            print_json(&serde_json::json!({
                "problem": spec.name,
                "eps": eps,
                "delta": delta,
                "f": p.value(&x),
                "certificate": cert,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose {
            which,
            config,
            replications,
            count,
            seed,
            c_prime,
        } => {
            let plan = parse_config(&config).map_err(as_config_error)?;
            let which = match which {
                DiagArg::Variance => Diagnostic::Variance,
                DiagArg::Epoch => Diagnostic::Epoch,
                DiagArg::Coupled => Diagnostic::Coupled,
                DiagArg::Localization => Diagnostic::Localization,
            };
            let opts = DiagnoseOptions {
                replications,
                count,
                seed,
                c_prime,
            };
            let out = diagnose(&plan, which, &opts)?;
            print_json(&out)?;
            Ok(if out.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED_CELL)
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => exit_for(&e),
    }
}
