use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use ncft_core::acceptance::{self, AcceptanceOptions};
use ncft_core::exec::{with_workers, Execution};
use ncft_core::experiment::{run_experiment, sweep, write_atomic, RunConfig, RunOptions, SweepGrid, SWEEP_HEADER};

/// Front tracking experiments with nonclassical shocks and nucleation.
#[derive(Debug, Parser)]
#[command(name = "ncft", version)]
struct Args {
    /// Run configuration (JSON), or the name of a bundled configuration.
    #[arg(long)]
    config: Option<String>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially, 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Run the acceptance suite.
    #[arg(long)]
    check: bool,
    /// Stop after conformance and calibration.
    #[arg(long)]
    calibrate_only: bool,
    /// Parameter grid (JSON) for a sweep over the configuration.
    #[arg(long)]
    sweep: Option<PathBuf>,
}

fn load_config(source: &str) -> Result<RunConfig> {
    let path = Path::new(source);
    if path.exists() {
        return RunConfig::load(path).with_context(|| format!("loading {source}"));
    }
    match acceptance::bundled_config(source) {
        Some(text) => RunConfig::from_json(text).with_context(|| format!("bundled config {source}")),
        None => bail!("no config file or bundled config named `{source}`"),
    }
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var("NCFT_SEED") {
        Ok(s) => Ok(Some(
            s.trim()
                .parse()
                .with_context(|| format!("NCFT_SEED = `{s}` is not an integer"))?,
        )),
        Err(_) => Ok(None),
    }
}

fn run(args: &Args) -> Result<bool> {
    let exec = if args.workers == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let seed = seed_from_env()?;
    if args.check {
        let report = acceptance::run_suite_with(&AcceptanceOptions { exec, seed }, |c| println!("{}", c.line()));
        if let Some(dir) = &args.out {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let bytes = serde_json::to_vec_pretty(&report.manifest())?;
            write_atomic(dir, "MANIFEST.json", &bytes)?;
        }
        return Ok(report.passed());
    }
    let Some(source) = &args.config else {
        bail!("--config is required unless --check is given");
    };
    let cfg = load_config(source)?;
    let opts = RunOptions {
        exec,
        seed,
        calibrate_only: args.calibrate_only,
    };
    if let Some(grid_path) = &args.sweep {
        let text = std::fs::read_to_string(grid_path).with_context(|| format!("reading {}", grid_path.display()))?;
        let grid: SweepGrid =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", grid_path.display()))?;
        let rows = sweep(&cfg, &grid, args.out.as_deref(), opts)?;
        println!("{SWEEP_HEADER}");
        for r in &rows {
            println!("{}", r.csv());
        }
        return Ok(rows.iter().all(|r| r.status == "ok"));
    }
    let outcome = run_experiment(&cfg, args.out.as_deref(), opts)?;
    let m = &outcome.manifest;
    if let Some(s) = &m.summary {
        println!(
            "{}: {} events, {} splits, {} merges, {} cycles, eta {:.6}",
            m.name, s.events, s.splits, s.merges, s.cycles, s.eta
        );
    }
    for c in &m.checks {
        println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(m.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let workers = args.workers;
    match with_workers(workers, || run(&args)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
