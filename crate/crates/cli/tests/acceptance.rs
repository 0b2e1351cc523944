//! Acceptance suite: the full report on the default configuration, one line per criterion.

use dumbbell_cli::config::ExperimentConfig;
use dumbbell_cli::pipeline::{run, Task};
use dumbbell_cli::report::write_outputs;
use std::process::ExitCode;
use std::time::Instant;

fn main() -> ExitCode {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut cfg = ExperimentConfig::default();
    cfg.output.dir = dir.path().to_path_buf();
    let report = match run(&cfg, Task::FullReport) {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance: run aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = write_outputs(&cfg, Task::FullReport, &report, dir.path()) {
        println!("acceptance: cannot write outputs: {e}");
        return ExitCode::FAILURE;
    }
    println!("\nacceptance criteria (tier {}):", cfg.tier.name());
    for c in &report.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        let values: Vec<String> = c
            .measured
            .iter()
            .filter(|m| !m.bound.is_empty())
            .map(|m| format!("{} = {:.4e} ({})", m.name, m.value, m.bound))
            .collect();
        println!("criterion {:>2}: {verdict}: {}", c.id, c.claim);
        if let Some(e) = &c.error {
            println!("              error: {e}");
        }
        for v in values {
            println!("              {v}");
        }
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!(
        "acceptance: {passed}/{} criteria pass in {:.1} s\n",
        report.checks.len(),
        start.elapsed().as_secs_f64()
    );
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
