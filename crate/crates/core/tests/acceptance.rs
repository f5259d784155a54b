//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so each line streams as soon as the
//! criterion finishes. Exits non-zero if any criterion fails.

use std::process::ExitCode;

use ncft_core::acceptance::{run_suite_with, AcceptanceOptions};
use ncft_core::exec::Execution;

fn main() -> ExitCode {
    let seed = std::env::var("NCFT_SEED").ok().and_then(|s| s.trim().parse().ok());
    let opts = AcceptanceOptions {
        exec: Execution::Parallel,
        seed,
    };
    println!(
        "acceptance suite, seed {}",
        seed.map_or("default".to_string(), |s| s.to_string())
    );
    let report = run_suite_with(&opts, |c| println!("{}", c.line()));
    let failed = report.criteria.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} criteria passed",
        report.criteria.len() - failed,
        report.criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
