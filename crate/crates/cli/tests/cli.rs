//! Command-line behavior: exit codes, serial determinism and tiny-tier golden files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn dumbbell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dumbbell"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

/// Same header, same non-numeric fields, numeric fields within 1e-9 relative.
fn assert_csv_close(actual: &Path, expected: &Path) {
    let a = std::fs::read_to_string(actual).unwrap();
    let e = std::fs::read_to_string(expected).unwrap();
    let (al, el): (Vec<&str>, Vec<&str>) = (a.lines().collect(), e.lines().collect());
    assert_eq!(al.len(), el.len(), "{} rows", expected.display());
    assert_eq!(al[0], el[0], "{} header", expected.display());
    for (ra, re) in al.iter().zip(&el).skip(1) {
        for (fa, fe) in ra.split(',').zip(re.split(',')) {
            match (fa.parse::<f64>(), fe.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!(
                    (x - y).abs() <= 1e-9 * y.abs().max(1e-300),
                    "{}: {ra} vs {re}",
                    expected.display()
                ),
                _ => assert_eq!(fa, fe, "{}", expected.display()),
            }
        }
    }
}

#[test]
fn decreasing_ladder_violation_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[sampling]\neps_ladder = [0.05, 0.1]\n").unwrap();
    let start = Instant::now();
    let out = dumbbell(&[
        "full-report",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly decreasing"));
    assert!(start.elapsed().as_secs_f64() < 2.0);
    assert!(!dir.path().join("o").exists());
}

#[test]
fn spectral_gap_assumption_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gap.toml");
    std::fs::write(&cfg, "tier = \"tiny\"\n[weight]\nmin_gap = 5.0\n").unwrap();
    let out = dumbbell(&[
        "spectra",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("assumption failed"));
}

#[test]
fn cross_section_is_fast_and_green() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = dumbbell(&["cross-section", "--out", dir.path().to_str().unwrap()]);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("checks passed: 2/2"));
    assert!(summary.contains("effective configuration:"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(json["all_passed"], true);
    assert_eq!(json["config"]["sampling"]["eps_ladder"][0], 0.2);
}

#[test]
fn serial_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        dumbbell(&[
            "frequency",
            "--tier",
            "tiny",
            "--serial",
            "--out",
            d.path().to_str().unwrap(),
        ]);
    }
    let x = std::fs::read(a.path().join("frequency.csv")).unwrap();
    let y = std::fs::read(b.path().join("frequency.csv")).unwrap();
    assert!(x == y, "frequency.csv differs between serial runs");
    let checks = |d: &tempfile::TempDir| -> serde_json::Value {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d.path().join("summary.json")).unwrap())
                .unwrap();
        serde_json::json!([v["checks"], v["fitted"]])
    };
    assert_eq!(
        serde_json::to_string(&checks(&a)).unwrap(),
        serde_json::to_string(&checks(&b)).unwrap()
    );
}

#[test]
fn tiny_tier_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().to_str().unwrap();
    for task in ["cross-section", "spectra", "frequency"] {
        dumbbell(&[task, "--tier", "tiny", "--serial", "--out", p]);
    }
    for name in [
        "cross_section.csv",
        "spectra.csv",
        "limit_spectra.csv",
        "frequency.csv",
    ] {
        assert_csv_close(&dir.path().join(name), &golden(name));
    }
}

#[test]
fn eps_override_replaces_the_ladder() {
    let out = dumbbell(&["print-config", "--eps", "0.05", "--tier", "tiny"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = dumbbell_cli::ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.sampling.eps_ladder, vec![0.05]);
    assert_eq!(cfg.tier, dumbbell_cli::Tier::Tiny);
}
