//! Command-line front end: run batches, sweeps, audits and self-checks.
//!
//! Exit codes: 0 success, 1 selfcheck failure, 2 configuration error,
//! 3 data error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use mnl_bandit::selfcheck::{run_selfcheck, Effort, Mutation};
use mnl_bandit::simulator::{
    run_batch, write_aggregate_csv, write_trace_csv, BatchResult, BatchSpec, SweepPoint,
};

use mnl_bandit_cli::audit;
use mnl_bandit_cli::config::{RunConfig, SweepAxis};
use mnl_bandit_cli::manifest::Manifest;

#[derive(Parser)]
#[command(name = "mnl-bandit", version, about = "MNL bandit simulation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write traces, aggregates and a manifest.
    Run {
        /// Path to a TOML configuration file.
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads override (0 = automatic).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the experiment once per value of the chosen sweep axis.
    Sweep {
        config: PathBuf,
        /// Sweep axis: k, kappa or variant.
        #[arg(long)]
        axis: SweepAxisArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-check invariants and coverage over a saved run directory.
    Audit {
        /// Directory containing traces.csv and manifest.json.
        dir: PathBuf,
    },
    /// Run the fast analytic property suite.
    Selfcheck {
        /// Deliberately corrupt one Jacobian draw (harness self-test).
        #[arg(long, hide = true)]
        inject_sign_error: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SweepAxisArg {
    K,
    Kappa,
    Variant,
}

impl From<SweepAxisArg> for SweepAxis {
    fn from(a: SweepAxisArg) -> Self {
        match a {
            SweepAxisArg::K => SweepAxis::K,
            SweepAxisArg::Kappa => SweepAxis::Kappa,
            SweepAxisArg::Variant => SweepAxis::Variant,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            jobs,
        } => run_command(&config, None, seed, out, jobs),
        Command::Sweep {
            config,
            axis,
            seed,
            out,
            jobs,
        } => run_command(&config, Some(axis.into()), seed, out, jobs),
        Command::Audit { dir } => match audit::audit_dir(&dir) {
            Ok(report) => {
                print!("{report}");
                println!("audit: ok");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("audit: {e:#}");
                ExitCode::from(3)
            }
        },
        Command::Selfcheck { inject_sign_error } => selfcheck_command(inject_sign_error),
    }
}

fn load_config(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut config: RunConfig =
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out {
        config.out_dir = out.display().to_string();
    }
    if let Some(jobs) = jobs {
        config.jobs = jobs;
    }
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(format!(
            "config {} is invalid:\n  {}",
            path.display(),
            problems.join("\n  ")
        ));
    }
    Ok(config)
}

fn run_command(
    path: &Path,
    axis: Option<SweepAxis>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
) -> ExitCode {
    let config = match load_config(path, seed, out, jobs) {
        Ok(c) => c,
        Err(message) => {
            eprintln!("{message}");
            return ExitCode::from(2);
        }
    };
    let points = match axis {
        None => config.run_points(),
        Some(axis) => match config.sweep_points(axis) {
            Ok(p) => p,
            Err(message) => {
                eprintln!("config {}: {message}", path.display());
                return ExitCode::from(2);
            }
        },
    };
    match execute(&config, axis, points) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("run failed: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn execute(
    config: &RunConfig,
    axis: Option<SweepAxis>,
    points: Vec<SweepPoint<f64>>,
) -> anyhow::Result<()> {
    let started = Instant::now();
    let sweep_keys: Vec<String> = points.iter().map(|p| p.key.clone()).collect();
    let spec = BatchSpec {
        points,
        horizon: config.horizon,
        n_realizations: config.n_realizations,
        base_seed: config.seed,
        lambda: config.lambda_option(),
        delta: config.delta,
        tol: config.tol,
        max_iter: config.max_iter,
        refit_period: config.refit_period,
    };
    let BatchResult { traces, aggregates } = run_batch(&spec, config.jobs)?;

    let out_dir = Path::new(&config.out_dir);
    std::fs::create_dir_all(out_dir)?;

    let mut trace_bytes = Vec::new();
    write_trace_csv(&mut trace_bytes, &traces)?;
    write_atomic(&out_dir.join("traces.csv"), &trace_bytes)?;

    let mut agg_bytes = Vec::new();
    write_aggregate_csv(&mut agg_bytes, &aggregates)?;
    write_atomic(&out_dir.join("aggregate.csv"), &agg_bytes)?;

    let command = if axis.is_some() { "sweep" } else { "run" };
    let manifest = Manifest::new(
        command,
        axis.map(|a| a.as_str()),
        config.clone(),
        sweep_keys,
        &traces,
    );
    let manifest_bytes = serde_json::to_vec_pretty(&manifest)?;
    write_atomic(&out_dir.join("manifest.json"), &manifest_bytes)?;

    for warning in &manifest.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "{command}: {} episodes in {:.1}s -> {}",
        traces.len(),
        started.elapsed().as_secs_f64(),
        out_dir.display()
    );
    Ok(())
}

/// Writes through a temp file plus rename, so no output is ever partial.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn selfcheck_command(inject: bool) -> ExitCode {
    let started = Instant::now();
    let mutation = inject.then_some(Mutation::JacobianSignFlip);
    let results = match run_selfcheck(Effort::quick(), mutation, 12345) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("selfcheck failed to run: {e}");
            return ExitCode::from(1);
        }
    };
    let mut all_passed = true;
    for r in &results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("property {:<28} {verdict} - {}", r.name, r.detail);
        all_passed &= r.passed;
    }
    let elapsed = started.elapsed().as_secs_f64();
    println!("selfcheck: {} properties in {elapsed:.1}s", results.len());
    if elapsed > 60.0 {
        eprintln!("warning: selfcheck exceeded the 60s soft budget ({elapsed:.1}s)");
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.name)
            .collect();
        eprintln!("selfcheck failed: {}", failed.join(", "));
        ExitCode::from(1)
    }
}
