use std::process::Command;

fn hydrofrac() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hydrofrac"))
}

#[test]
fn bench_selfsimilar_writes_the_reference_profile() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ref.csv");
    let out = hydrofrac()
        .args(["bench-selfsimilar", "--geometry", "penny", "--points", "50", "--csv"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert!((json["xi"].as_f64().unwrap() - 0.6978).abs() < 1e-4);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("zeta,W"));
    assert_eq!(lines.count(), 51);
}

#[test]
fn run_writes_series_profiles_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = hydrofrac().args(["run", "--t-end", "1.1", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "ok");
    assert!(summary["max_balance_residual"].as_f64().unwrap() <= 1e-6);
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert!(series.starts_with("step,t,dt,front,volume,balance_residual"));
    let front = std::fs::read_to_string(dir.path().join("front_final.csv")).unwrap();
    assert!(front.starts_with("x,y,n_x,n_y"));
}

#[test]
fn three_cells_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = hydrofrac().args(["run", "--cells", "3", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("4 cells"));
}

#[test]
fn config_file_keys_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[grid]\ncells = 5\nspacing = 1\n").unwrap();
    let out = hydrofrac().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn diagnose_reports_the_error_pattern() {
    let out = hydrofrac().args(["diagnose-discretization", "--cells-per-diameter", "20"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("interior pressure error"));
}
