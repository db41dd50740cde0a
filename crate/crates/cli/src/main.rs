//! `ogboost`: progressive-validation experiments for the online boosters.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 a
//! checked bound failed under `--assert-bounds`.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod pipeline;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ogboost::boosting::StepSize;
use ogboost::learners::LOWER_BOUND_SCALE_C;
use ogboost::LossFamily;

use crate::commands::{BatchSetup, GridSpec, LowerBoundSetup};
use crate::config::{parse_eta, RunConfig};

/// Every violated configuration constraint.
#[derive(Debug)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for v in &self.0 {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser)]
#[command(name = "ogboost", version, about = "Online gradient boosting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Progressive validation of one booster configuration.
    Run(RunArgs),
    /// Batch stagewise fitting, additive vs gated steps, with both bounds.
    BatchCompare(BatchArgs),
    /// The adversarial stream on which no booster beats the uniform mixture by much.
    LowerBound(LowerArgs),
    /// Tune learning rate, stages and step size on the first half of the stream.
    Grid(GridArgs),
}

#[derive(Args)]
struct Output {
    /// Directory for the TSV trace and the JSON summary.
    #[arg(long, env = "OGBOOST_OUT", default_value = "ogboost-out")]
    out: PathBuf,

    /// Exit with code 4 when an evaluated bound or check fails.
    #[arg(long)]
    assert_bounds: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: RunConfig,

    /// Load the run configuration from JSON (a bare config or a previous
    /// summary.json); replaces every run flag.
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BatchArgs {
    /// Functions in the planted dictionary (before negation).
    #[arg(long, default_value_t = 8)]
    atoms: usize,
    /// Batch size.
    #[arg(long, default_value_t = 64)]
    points: usize,
    /// Sum of |w| of the planted combination.
    #[arg(long, default_value_t = 2.0)]
    planted_norm: f64,
    /// Constant step size.
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 400)]
    stages: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Loss (p-norm is not supported in batch mode).
    #[arg(long, default_value = "squared", value_parser = |s: &str| s.parse::<LossFamily>().map_err(|e| e.to_string()))]
    loss: LossFamily,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct LowerArgs {
    #[arg(long, default_value_t = 4)]
    stages: usize,
    /// Constant c of the construction; pool size M = N/c. The original
    /// construction uses 1/4000, far beyond desk scale.
    #[arg(long, default_value_t = 0.02)]
    scale_c: f64,
    /// Number of seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stream length (default 12 M, the smallest allowed).
    #[arg(long)]
    rounds: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    cfg: RunConfig,
    /// Learning rates to try (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    learning_rates: Vec<f64>,
    /// Stage counts to try (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    stages_grid: Vec<usize>,
    /// Span step sizes to try (comma separated; `auto` keeps --eta).
    #[arg(long, value_delimiter = ',', value_parser = parse_eta)]
    etas: Vec<StepSize>,
    /// Parallel child runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    output: Output,
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let cfg = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(cfg)
        .with_context(|| format!("{} is not a run configuration", path.display()))
        .map_err(|e| ConfigError(vec![format!("{e:#}")]).into())
}

/// `Ok(false)` means an asserted check failed.
fn run(args: RunArgs) -> Result<bool> {
    let cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => args.cfg,
    };
    let mut v = cfg.violations();
    if args.output.assert_bounds {
        if let Some(why) = cfg.bounds_unsupported() {
            v.push(format!("--assert-bounds: {why}"));
        }
    }
    if !v.is_empty() {
        return Err(ConfigError(v).into());
    }
    let exec = pipeline::execute(&cfg, true)?;
    let s = &exec.summary;
    let out = &args.output.out;
    commands::write(
        out,
        "run.tsv",
        &pipeline::trace_tsv(&exec.metrics, s.regret_reference.as_deref()),
    )?;
    commands::write(out, "summary.json", &commands::json(s)?)?;

    if let Some(eta) = s.eta {
        println!("eta = {eta:.6}, B = {:.6}", s.radius);
    }
    println!(
        "booster: total loss {:.4}, report-half mean {:.6}",
        s.booster.total, s.booster.report_loss
    );
    for (name, b) in &s.baselines {
        println!(
            "{name}: total loss {:.4}, report-half mean {:.6}",
            b.total, b.report_loss
        );
    }
    for b in &s.bounds {
        println!(
            "{}: measured {:.4} vs bound {:.4} {}",
            b.name,
            b.measured,
            b.bound,
            if b.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(s.pass || !args.output.assert_bounds)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::BatchCompare(a) => {
            let setup = BatchSetup {
                atoms: a.atoms,
                points: a.points,
                planted_norm: a.planted_norm,
                eta: a.eta,
                stages: a.stages,
                seed: a.seed,
                loss: a.loss,
            };
            let hold = commands::batch_compare(&setup, &a.output.out)?;
            Ok(hold || !a.output.assert_bounds)
        }
        Command::LowerBound(a) => {
            let mut v = Vec::new();
            if a.stages == 0 {
                v.push("--stages must be at least 1".to_string());
            }
            if !(a.scale_c > 0.0 && a.scale_c <= 1.0) {
                v.push(format!("--scale-c must lie in (0, 1], got {}", a.scale_c));
            }
            if !v.is_empty() {
                return Err(ConfigError(v).into());
            }
            if a.scale_c == LOWER_BOUND_SCALE_C {
                eprintln!("note: c = 1/4000 needs a pool of {} functions", a.stages * 4000);
            }
            let setup = LowerBoundSetup {
                stages: a.stages,
                scale_c: a.scale_c,
                seeds: a.seeds,
                seed: a.seed,
                rounds: a.rounds,
            };
            let pass = commands::lower_bound(&setup, &a.output.out)?;
            Ok(pass || !a.output.assert_bounds)
        }
        Command::Grid(a) => {
            let spec = GridSpec {
                learning_rates: a.learning_rates,
                stages: a.stages_grid,
                etas: a.etas,
                workers: a.workers,
            };
            commands::grid(&a.cfg, &spec, &a.output.out)?;
            Ok(true)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<ogboost::Error>() {
        Some(ogboost::Error::InvalidParameter { .. }) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: a checked bound failed");
            ExitCode::from(4)
        }
        Err(e) => {
            let code = exit_code(&e);
            if e.downcast_ref::<ConfigError>().is_some() {
                eprint!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}
