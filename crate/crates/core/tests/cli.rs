use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use radner::io::read_grid;
use radner::oracle::benchmark_y;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn radner(name: &str, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radner"))
        .arg("--scenario")
        .arg(scenario(name))
        .arg("--out")
        .arg(out)
        .args(extra)
        .env("RADNER_THREADS", "1")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn validate_accepts_the_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = radner("gaussian_benchmark", dir.path(), &["--command", "validate"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&dir.path().join("validation.json"));
    assert_eq!(v["passed"], true);
    assert!(dir.path().join("scenario.toml").exists());
    assert!(!dir.path().join("weights.csv").exists());
}

#[test]
fn solve_finds_symmetric_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = radner(
        "symmetric_two_agent",
        dir.path(),
        &["--command", "solve", "--paths", "5000"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,w0,w1,residual,step,phi_sum"));
    let last: Vec<f64> = lines
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(
        (last[1] - 0.5).abs() < 1e-6 && (last[2] - 0.5).abs() < 1e-6,
        "{last:?}"
    );
    let scenario = std::fs::read_to_string(dir.path().join("scenario.toml")).unwrap();
    assert!(scenario.contains("paths = 5000"));
}

#[test]
fn price_writes_readable_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let out = radner(
        "gaussian_benchmark",
        dir.path(),
        &["--command", "price", "--grid", "200x400"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let y = read_grid(&dir.path().join("y.rgrd")).unwrap();
    assert_eq!(y.n_times(), 201);
    assert_eq!(y.grid.points, vec![400]);
    let mid = 200;
    let mut x = vec![0.0];
    y.grid.node_into(mid, &mut x);
    let exact = benchmark_y(0.0, &x);
    assert!((y.value(0, mid) - exact).abs() / exact < 1e-2);
    let errors = std::fs::read_to_string(dir.path().join("closed_form_errors.csv")).unwrap();
    assert!(
        errors.lines().skip(1).all(|l| l.ends_with(",true")),
        "{errors}"
    );
}

#[test]
fn degenerate_scenario_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = radner(
        "degenerate_claim",
        dir.path(),
        &["--command", "all", "--paths", "4000", "--grid", "50x100"],
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let c = json(&dir.path().join("completeness.json"));
    assert_eq!(c["dispersion"]["passed"], false);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("stage.check,fail"));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = radner("gaussian_benchmark", dir.path(), &["--grid", "oops"]);
    assert_eq!(out.status.code(), Some(2));
    let missing = Command::new(env!("CARGO_BIN_EXE_radner"))
        .args(["--scenario", "/nonexistent.toml", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
