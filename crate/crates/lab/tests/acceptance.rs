//! Runs every experiment at its default config and prints one line per
//! acceptance criterion. Exits non-zero if any criterion fails or is
//! missing.

use lab::{Config, Experiment};
use std::process::ExitCode;
use std::time::Instant;

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("temporary output root");
    let mut manifests = Vec::new();
    let mut errors = Vec::new();
    for e in Experiment::ALL {
        let start = Instant::now();
        match lab::run(&Config::new(e, 1), root.path()) {
            Ok(m) => {
                eprintln!("{} finished in {:.1} s", e.name(), start.elapsed().as_secs_f64());
                for w in &m.warnings {
                    eprintln!("  warning: {w}");
                }
                manifests.push(m);
            }
            Err(err) => {
                for n in e.criteria() {
                    println!("FAIL criterion {n}: {} did not finish: {err}", e.name());
                }
                errors.push(e);
            }
        }
    }
    let results = lab::criteria(&manifests);
    let mut ok = errors.is_empty();
    for r in &results {
        println!("{} criterion {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.criterion, r.details.join("; "));
        ok &= r.passed;
    }
    let expected = 12 - errors.iter().map(|e| e.criteria().len()).sum::<usize>();
    if results.len() != expected {
        println!("FAIL: {} criteria reported, expected {expected}", results.len());
        ok = false;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
