use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bsindy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsindy"))
        .args(args)
        .output()
        .unwrap()
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn simulate_writes_csv_to_stdout() {
    let out = bsindy(&[
        "simulate", "--system", "lorenz", "--t1", "1", "--dt", "0.01",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,x3"));
    assert_eq!(lines.count(), 101);
}

#[test]
fn simulate_writes_file_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vdp.csv");
    let out = bsindy(&[
        "simulate",
        "--system",
        "van_der_pol",
        "--t1",
        "2",
        "--dt",
        "0.05",
        "--sigma-x",
        "0.1",
        "--seed",
        "3",
        "--x0",
        "-1,0.5",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let ts = bsindy::io::load_csv(&path).unwrap();
    assert_eq!(ts.len(), 41);
    let meta = bsindy::io::load_metadata(&path).unwrap().unwrap();
    assert_eq!(meta.sigma_x, Some(0.1));
    assert_eq!(meta.seed, Some(3));
}

#[test]
fn fit_prints_lynx_hare_equations() {
    let dir = tempfile::tempdir().unwrap();
    let config = repo("configs/lynx_hare.json");
    let out = bsindy(&[
        "fit",
        "-c",
        config.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert_eq!(
        stdout.lines().collect::<Vec<_>>(),
        [
            "dx1/dt = 0.53·x1 − 0.026·x1·x2",
            "dx2/dt = −0.98·x2 + 0.028·x1·x2"
        ]
    );
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap())
            .unwrap();
    assert_eq!(model["dimensions"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("sigma_sweep.csv").exists());
}

#[test]
fn quiet_suppresses_notes() {
    let config = repo("configs/lynx_hare.json");
    let out = bsindy(&[
        "-q",
        "fit",
        "-c",
        config.to_str().unwrap(),
        "--sigma-x",
        "2.7",
    ]);
    assert!(out.status.success());
    assert!(out.stderr.is_empty(), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).lines().count(), 2);
}

#[test]
fn sweep_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = repo("configs/cubic_oscillator_sweep.json");
    let out = bsindy(&[
        "sweep",
        "-c",
        config.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
        "--trials",
        "3",
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    for name in ["report.json", "report.csv", "timing.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let report: bsindy::bench::ExperimentReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report.config.trials, 3);
    assert_eq!(report.cells.len(), 12);
}

#[test]
fn active_and_derivative_comparison_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let active = repo("configs/van_der_pol_active.json");
    let out = bsindy(&[
        "active",
        "-c",
        active.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.lines().count() > 2);
    assert!(dir.path().join("model.json").exists());

    let deriv = repo("configs/van_der_pol_derivatives.json");
    let out = bsindy(&[
        "fd-vs-weak",
        "-c",
        deriv.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("deriv_compare.csv").exists());
}

#[test]
fn missing_file_is_a_runtime_error() {
    let out = bsindy(&["fit", "-c", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).starts_with("error:"));
}

#[test]
fn malformed_config_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"system\": \"lorenz\",\n  \"t1\": oops\n}\n").unwrap();
    let out = bsindy(&[
        "sweep",
        "-c",
        path.to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains(":3"), "{}", text(&out.stderr));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(bsindy(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bsindy(&["simulate", "--system"]).status.code(), Some(2));
}
