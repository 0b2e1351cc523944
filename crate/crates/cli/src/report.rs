//! Writing a run: CSV artifacts, a human-readable summary and a machine-readable summary.
//!
//! CSV schemas (version 1):
//! - `frequency.csv`, `profile_frequency.csv`: `regime,eps,r,D,H,N`
//! - `h_u.csv`: `lambda,H_U,mu`
//! - `beta.csv`: `eps,beta_fit,beta_formula,exponent`
//! - `spectra.csv`: `eps,lambda,lambda_k0,distance`; `limit_spectra.csv`: `domain,index,lambda`
//! - `identities.csv`: `refinement,vertices,kind,location,residual`
//! - `envelopes.csv`: `eps,C3,c_sub,sub_violations,C5,sup_abs_u`
//! - `cross_section.csv`: `s,psi1`

use crate::config::ExperimentConfig;
use crate::pipeline::{Check, Fitted, Report, Task};
use crate::PipelineError;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct JsonSummary<'a> {
    schema_version: u32,
    task: &'a str,
    all_passed: bool,
    checks: &'a [Check],
    fitted: &'a [Fitted],
    files: Vec<&'a str>,
    config: &'a ExperimentConfig,
}

/// One line per check: `[PASS] 6 claim` or `[FAIL] ...`.
pub fn check_line(c: &Check) -> String {
    let verdict = if c.passed { "PASS" } else { "FAIL" };
    let mut line = format!("[{verdict}] {:>2} {}", c.id, c.claim);
    if let Some(e) = &c.error {
        let _ = write!(line, " (error: {e})");
    }
    line
}

/// Plain-text summary: verdicts, measured values, fitted constants and the effective config.
pub fn render_summary(cfg: &ExperimentConfig, task: Task, report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "task: {}", task.name());
    let _ = writeln!(out, "tier: {}", cfg.tier.name());
    let passed = report.checks.iter().filter(|c| c.passed).count();
    let _ = writeln!(out, "checks passed: {passed}/{}\n", report.checks.len());
    for c in &report.checks {
        let _ = writeln!(out, "{}", check_line(c));
        for m in &c.measured {
            if m.bound.is_empty() {
                let _ = writeln!(out, "       {} = {:.6e}", m.name, m.value);
            } else {
                let _ = writeln!(
                    out,
                    "       {} = {:.6e}  (required {})",
                    m.name, m.value, m.bound
                );
            }
        }
    }
    if !report.fitted.is_empty() {
        let _ = writeln!(out, "\nfitted constants:");
        for f in &report.fitted {
            let _ = writeln!(out, "  {} = {:.6e}  [{}]", f.name, f.value, f.window);
        }
    }
    let _ = writeln!(out, "\neffective configuration:\n{}", cfg.to_toml());
    out
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes artifacts and both summaries into `dir`, returning the written paths in order.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    task: Task,
    report: &Report,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for (name, contents) in &report.artifacts {
        let path = dir.join(name);
        write(&path, contents)?;
        written.push(path);
    }
    let path = dir.join("summary.txt");
    write(&path, &render_summary(cfg, task, report))?;
    written.push(path);
    let json = JsonSummary {
        schema_version: SCHEMA_VERSION,
        task: task.name(),
        all_passed: report.all_passed(),
        checks: &report.checks,
        fitted: &report.fitted,
        files: report.artifacts.iter().map(|a| a.0.as_str()).collect(),
        config: cfg,
    };
    let path = dir.join("summary.json");
    write(
        &path,
        &serde_json::to_string_pretty(&json).expect("summary serializes"),
    )?;
    written.push(path);
    Ok(written)
}
