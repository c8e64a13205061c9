//! Full-scale acceptance run: one PASS/FAIL line per check.

use std::path::Path;
use std::process::ExitCode;

use adk_cli::{execute, RunConfig};
use adk_core::verify::{run_check, Check, Scale, CHECKS};

const SEED: u64 = 20240917;

/// Wall-clock limits for the checks that carry one.
fn time_limit(name: &str) -> Option<f64> {
    match name {
        "linear-switch-time" => Some(5.0),
        "riccati-hjb" => Some(60.0),
        _ => None,
    }
}

/// Runs each bundled config twice through the CLI and compares the JSON.
fn cli_json_identical() -> Result<usize, String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut compared = 0;
    for name in ["linear", "budget", "lq", "stop", "simulate"] {
        let cfg = RunConfig::load(&dir.join(format!("{name}.toml"))).map_err(|e| e.to_string())?;
        let a = execute(&cfg).map_err(|e| e.to_string())?;
        let b = execute(&cfg).map_err(|e| e.to_string())?;
        if a.artifacts.json != b.artifacts.json {
            return Err(format!("{name} JSON differs between runs"));
        }
        compared += 1;
    }
    Ok(compared)
}

fn finish(check: &mut Check) {
    if let Some(limit) = time_limit(&check.name) {
        if check.seconds > limit {
            check.passed = false;
            check.summary.push_str(&format!(" [exceeded {limit}s]"));
        }
    }
    if check.name == "determinism" {
        match cli_json_identical() {
            Ok(n) => check
                .summary
                .push_str(&format!("; {n} CLI fixtures produce byte-identical JSON")),
            Err(e) => {
                check.passed = false;
                check.summary.push_str(&format!("; {e}"));
            }
        }
    }
}

fn main() -> ExitCode {
    let mut failures = 0;
    let total = CHECKS.len();
    for (i, (name, _)) in CHECKS.iter().enumerate() {
        let mut check = run_check(name, SEED, Scale::Full).expect("listed check");
        finish(&mut check);
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!(
            "{verdict} [{:>2}/{total}] {name} ({:.1}s): {}",
            i + 1,
            check.seconds,
            check.summary
        );
        if !check.passed {
            failures += 1;
            for m in &check.metrics {
                println!("       {} = {:e}", m.name, m.value);
            }
        }
    }
    println!("{} passed, {failures} failed", total - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
