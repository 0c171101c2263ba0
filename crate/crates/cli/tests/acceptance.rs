//! Acceptance battery: criteria 1 to 12 from one `martin suite` run, and
//! criterion 13 by repeating the run with a different worker count.

use std::path::Path;
use std::process::Command;

use martin_cli::suite::SuiteReport;

const SEED: &str = "1";

fn run_suite(dir: &Path, workers: usize) -> (Vec<u8>, serde_json::Value, i32) {
    let out = dir.join(format!("suite-{workers}.json"));
    let status = Command::new(env!("CARGO_BIN_EXE_martin"))
        .args(["suite", "--seed", SEED, "--workers", &workers.to_string(), "--out"])
        .arg(&out)
        .status()
        .expect("martin binary runs");
    let report = std::fs::read(&out).expect("report written");
    let meta_path = dir.join(format!("suite-{workers}.json.meta.json"));
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(meta_path).expect("metadata written")).expect("metadata parses");
    (report, meta, status.code().unwrap_or(-1))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let (first, meta, code) = run_suite(dir.path(), 1);
    let report: SuiteReport = serde_json::from_slice(&first).expect("report parses");
    let timings = meta["timings"].as_array().cloned().unwrap_or_default();

    let mut failures = 0;
    for (i, c) in report.criteria.iter().enumerate() {
        let secs = timings.get(i).and_then(|t| t["seconds"].as_f64()).unwrap_or(f64::NAN);
        let in_time = c.time_limit.is_none_or(|l| secs < l);
        let pass = c.pass && in_time;
        if !pass {
            failures += 1;
        }
        let limit = c.time_limit.map(|l| format!(" (limit {l} s)")).unwrap_or_default();
        println!(
            "criterion {:>2} {} {}: {} [{secs:.1} s{limit}]",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if report.criteria.len() != 12 {
        failures += 1;
        println!("expected 12 in-process criteria, found {}", report.criteria.len());
    }

    let (second, _, code2) = run_suite(dir.path(), 2);
    let same = first == second;
    if !same {
        failures += 1;
    }
    println!(
        "criterion 13 {} determinism: reports with 1 and 2 workers are {} ({} bytes)",
        if same { "PASS" } else { "FAIL" },
        if same { "byte-identical" } else { "different" },
        first.len()
    );
    println!("suite exit codes {code} and {code2}");

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 13 acceptance criteria passed");
}
