//! Command-line front end: build a scenario from a config file, integrate it,
//! write the trajectory and invariant logs, and run property checks.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error,
//! 3 numerical failure, 4 I/O error.

pub mod checks;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use herglotz_core::scenarios::{default_scenario, SCENARIO_NAMES};
use herglotz_core::HerglotzError;
use thiserror::Error;

use crate::checks::{default_suite, run_checks, CheckContext, CheckKind, CheckResult};
use crate::config::{build_scenario, parse_config, scenario_parameters, RunConfig};
use crate::output::{invariants_json, trajectory_csv, with_suffix, write_atomic, CheckReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] HerglotzError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "herglotz", version, about = "Dissipative Herglotz mechanics on Lie algebroids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a scenario and write the trajectory CSV, invariant log and check report
    Run(RunArgs),
    /// Integrate a scenario and run the property-check suite
    Verify(RunArgs),
    /// List the built-in scenarios and their parameters
    ListScenarios,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Path to the TOML config
    pub config: PathBuf,
    #[arg(long)]
    pub output_prefix: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

/// Result of a `run` or `verify` invocation.
#[derive(Debug)]
pub struct Outcome {
    pub report: CheckReport,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.overall_pass {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(p) = &args.output_prefix {
        cfg.output_prefix = p.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(h) = args.step {
        cfg.integrator.step = h;
        cfg.integrator.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(t) = args.horizon {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("horizon must be positive, got {t}")));
        }
        cfg.horizon = Some(t);
    }
    Ok(cfg)
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("HERGLOTZ_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("HERGLOTZ_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Config(e.to_string()))
}

/// Shared body of `run` and `verify`. `write_outputs` selects the `run` behavior.
pub fn execute(args: &RunArgs, write_outputs: bool) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let cfg = load_config(args)?;
    let built = build_scenario(&cfg)?;
    let scenario = &built.scenario;

    let specs = match &cfg.checks {
        Some(c) => c.clone(),
        None if write_outputs => Vec::new(),
        None => default_suite(built.wong.is_some()),
    };
    if specs.iter().any(|s| s.kind == CheckKind::ReductionCrosscheck) && built.wong.is_none() {
        return Err(CliError::Config(format!(
            "reduction_crosscheck is only available for the abelian 'wong' scenario, not '{}'",
            scenario.name
        )));
    }

    let trajectory = scenario.integrate(&cfg.integrator)?;
    let log = scenario.invariant_log(&trajectory)?;
    let laws = scenario.check_laws(&trajectory)?;

    let ctx = CheckContext {
        scenario,
        trajectory: &trajectory,
        log: &log,
        integrator: &cfg.integrator,
        wong: built.wong.as_ref(),
        seed: cfg.seed,
    };
    let results: Vec<CheckResult> = thread_pool()?.install(|| run_checks(&ctx, &specs))?;

    let report = CheckReport {
        scenario: scenario.name.clone(),
        seed: cfg.seed,
        horizon: scenario.horizon,
        step: cfg.integrator.step,
        samples: trajectory.len(),
        overall_pass: results.iter().all(|r| r.passed),
        checks: results,
        warnings: cfg.warnings.clone(),
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };

    let mut files = Vec::new();
    if write_outputs {
        let csv = with_suffix(&cfg.output_prefix, ".csv");
        write_atomic(&csv, trajectory_csv(scenario, &trajectory, &log).as_bytes())?;
        let inv = with_suffix(&cfg.output_prefix, "_invariants.json");
        write_atomic(&inv, invariants_json(scenario, &log, &laws)?.as_bytes())?;
        files.extend([csv, inv]);
    }
    let rep = with_suffix(&cfg.output_prefix, "_report.json");
    write_atomic(&rep, report.to_json()?.as_bytes())?;
    files.push(rep);
    Ok(Outcome { report, files })
}

fn print_outcome(o: &Outcome) {
    for w in &o.report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: {} samples to t = {}",
        o.report.scenario, o.report.samples, o.report.horizon
    );
    for c in &o.report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<24} {:.3e} (tol {:.1e})", c.name, c.measured, c.tolerance);
    }
    for f in &o.files {
        println!("wrote {}", f.display());
    }
}

fn list_scenarios() {
    for name in SCENARIO_NAMES {
        let s = default_scenario(name).expect("built-in scenarios build");
        println!(
            "{name:<18} n={} r={} T={}  params: {}",
            s.chart.base_dim(),
            s.chart.fiber_rank(),
            s.horizon,
            scenario_parameters(name).join(", ")
        );
    }
}

/// Parses `args` (including the program name) and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (args, write) = match &cli.command {
        Command::ListScenarios => {
            list_scenarios();
            return EXIT_PASS;
        }
        Command::Run(a) => (a, true),
        Command::Verify(a) => (a, false),
    };
    match execute(args, write) {
        Ok(o) => {
            print_outcome(&o);
            o.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
