//! Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::process::ExitCode;

use parisi_core::verify::{run_criterion, NAMES};

const SEED: u64 = 20240601;

/// `PARISI_CRITERIA=2,5` restricts the run.
fn selected() -> Vec<usize> {
    match std::env::var("PARISI_CRITERIA") {
        Ok(s) if !s.trim().is_empty() => s.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        _ => (1..=NAMES.len()).collect(),
    }
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    let mut failed = Vec::new();
    for id in selected() {
        match run_criterion(id, SEED) {
            Ok(o) => {
                println!("{}", o.line());
                if !o.pass {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("FAIL criterion {id:>2} {}: error: {e}", NAMES.get(id.wrapping_sub(1)).unwrap_or(&"unknown"));
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
