//! One PASS/FAIL line per acceptance criterion at the default master seed.
//! Runs without the libtest harness so every line is printed.

use std::process::ExitCode;

use dormant_pam::verify::{run_criterion, VerifyConfig, CRITERIA};

fn main() -> ExitCode {
    let cfg = VerifyConfig::default();
    let mut failed = Vec::new();
    for (id, name) in CRITERIA {
        match run_criterion(id, &cfg) {
            Ok(o) => {
                println!("criterion {:>2} {:<26} {} {}", id, name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
                if !o.passed {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:>2} {name:<26} FAIL error: {e}");
                failed.push(id);
            }
        }
    }
    println!("{} of {} criteria passed", CRITERIA.len() - failed.len(), CRITERIA.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
