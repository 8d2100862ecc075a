//! Config-driven front end behind the `contractforge` binary.
//!
//! ```text
//! contractforge <validate|solve|audit|design-step|build-adjustment|sweep>
//!     --config <path> [--out <dir>] [--grid <n>] [--quiet]
//! ```
//!
//! Each run prints a JSON [`RunReport`] and, with an output directory,
//! writes it to `report.json` next to any CSV tables. Exit codes: 0 success
//! (structured infeasibility included), 1 configuration error, 2 failed
//! validation, 3 numerical failure. `CONTRACTFORGE_THREADS` caps the worker
//! pool.

pub mod config;
mod commands;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::cost_model::VALIDATION_SEED;
use crate::error::{ContractError, Result};
use crate::numeric::round_sig;

pub use commands::{execute, CommandOutput};
pub use config::RunConfig;

pub const THREADS_ENV: &str = "CONTRACTFORGE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Significant digits kept for every float in reports and tables.
pub const OUTPUT_DIGITS: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "contractforge", version, about = "Two-stage principal-agent contract toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json and CSV tables (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Action grid size (overrides `grid.action_grid_size`).
    #[arg(long)]
    grid: Option<usize>,
    /// Do not print the report to stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Audit the cost model's convexity and conjugate identities.
    Validate(CommonArgs),
    /// Solve the principal's complete-information or ex-ante problem.
    Solve(CommonArgs),
    /// Check whether the second-stage incentive induces truthful play.
    Audit(CommonArgs),
    /// Design a two-level step incentive for discrete types.
    DesignStep(CommonArgs),
    /// Build and verify the fee that restores truthful play.
    BuildAdjustment(CommonArgs),
    /// Sweep theta, the step threshold or the low-type level.
    Sweep(CommonArgs),
}

/// The operation a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Validate,
    Solve,
    Audit,
    DesignStep,
    BuildAdjustment,
    Sweep,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Solve => "solve",
            Self::Audit => "audit",
            Self::DesignStep => "design-step",
            Self::BuildAdjustment => "build-adjustment",
            Self::Sweep => "sweep",
        }
    }
}

impl Command {
    fn split(self) -> (CommandKind, CommonArgs) {
        match self {
            Self::Validate(a) => (CommandKind::Validate, a),
            Self::Solve(a) => (CommandKind::Solve, a),
            Self::Audit(a) => (CommandKind::Audit, a),
            Self::DesignStep(a) => (CommandKind::DesignStep, a),
            Self::BuildAdjustment(a) => (CommandKind::BuildAdjustment, a),
            Self::Sweep(a) => (CommandKind::Sweep, a),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub config: Value,
    pub results: Value,
    pub seed: u64,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

/// Exit code for an error raised while running a command.
pub fn exit_code(err: &ContractError) -> i32 {
    match err {
        ContractError::Numerical(_) | ContractError::Convergence(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

/// Rounds every float in `v` to [`OUTPUT_DIGITS`] significant digits.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().map(|x| round_sig(x, OUTPUT_DIGITS)) {
                if let Some(r) = serde_json::Number::from_f64(x) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Worker count requested through [`THREADS_ENV`], if any.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ContractError::Config(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ContractError::Config(format!("cannot build a {n}-thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_parsed(kind: CommandKind, args: CommonArgs) -> Result<i32> {
    let start = Instant::now();
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(n) = args.grid {
        cfg.grid.action_grid_size = n;
    }
    if let Some(out) = args.out {
        cfg.output_dir = Some(out);
    }
    let threads = threads_from_env()?;
    let (output, used_threads) =
        with_threads(threads, || execute(kind, &cfg).map(|o| (o, rayon::current_num_threads())))??;

    let mut results = output.results;
    round_floats(&mut results);
    let mut echo = serde_json::to_value(&cfg)?;
    round_floats(&mut echo);
    let report = RunReport {
        command: kind.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        config: echo,
        results,
        seed: VALIDATION_SEED,
        threads: used_threads,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = &cfg.output_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), format!("{text}\n"))?;
        for (name, body) in &output.files {
            fs::write(dir.join(name), body)?;
        }
    }
    if !args.quiet {
        println!("{text}");
    }
    Ok(if output.validation_failed { EXIT_VALIDATION } else { EXIT_OK })
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (kind, args) = cli.command.split();
    match run_parsed(kind, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
