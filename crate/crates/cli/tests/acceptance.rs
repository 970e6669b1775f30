//! Acceptance criterion 9: the pipeline is byte-for-byte reproducible.
//!
//! Runs without the test harness and prints one PASS/FAIL line.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{stderr, tree, Sandbox};

fn criterion_9() -> Result<String, String> {
    let s = Sandbox::new();
    for out in ["run1", "run2"] {
        let o = s.run_into(&["pipeline"], out);
        if !o.status.success() {
            return Err(format!("{out} failed: {}", stderr(&o).trim()));
        }
    }
    let (a, b) = (tree(&s.path("run1")), tree(&s.path("run2")));
    if a.is_empty() {
        return Err("no outputs written".into());
    }
    if a.keys().ne(b.keys()) {
        return Err("runs wrote different file sets".into());
    }
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b[*k] != **v)
        .map(|(k, _)| k.display().to_string())
        .collect();
    if !differing.is_empty() {
        return Err(format!("differing files: {}", differing.join(", ")));
    }
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical", a.len()))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let outcome = criterion_9();
    match &outcome {
        Ok(detail) => println!("criterion 9: end-to-end determinism ... PASS ({detail})"),
        Err(why) => println!("criterion 9: end-to-end determinism ... FAIL ({why})"),
    }
    let failed = usize::from(outcome.is_err());
    println!("acceptance: {} passed, {failed} failed in {:.2?}", 1 - failed, started.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
