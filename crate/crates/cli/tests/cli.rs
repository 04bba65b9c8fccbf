use std::fs;
use std::process::{Command, Output};

fn shortcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shortcut"))
        .args(args)
        .env("SHORTCUT_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn sweep_smoke_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    let timing = dir.path().join("timing.json");
    let out = shortcut(&[
        "sweep",
        "--k",
        "16",
        "--trials",
        "20",
        "--variants",
        "resnet_ssw",
        "--out",
        path.to_str().unwrap(),
        "--timing-out",
        timing.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let cell = &report["cells"][0];
    assert_eq!(cell["variant"], "resnet_ssw");
    let total = cell["success_count"].as_u64().unwrap()
        + cell["spurious_count"].as_u64().unwrap()
        + cell["undecided_count"].as_u64().unwrap();
    assert_eq!(total, 20);
    assert!(fs::read_to_string(&timing).unwrap().contains("total_secs"));
    assert!(!fs::read_to_string(&path).unwrap().contains("secs"));
}

#[test]
fn sweep_json_is_reproducible() {
    let args = [
        "sweep",
        "--k",
        "16",
        "--trials",
        "12",
        "--variants",
        "cnn_baseline,resnet_constant",
    ];
    let a = shortcut(&args);
    let b = shortcut(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_region_k_passes() {
    let out = shortcut(&["verify", "--region", "K", "--m", "0.2", "--points", "2000"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["min_slack"].as_f64().unwrap() >= -1e-9);
}

#[test]
fn verify_negative_control_finds_violations() {
    let out = shortcut(&[
        "verify",
        "--region",
        "K",
        "--m",
        "5",
        "--negative-control",
        "--points",
        "500",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["violation_count"].as_u64().unwrap() > 0);
}

#[test]
fn verification_failure_exits_two() {
    // The experiment teacher has |a*|^2 = 25, for which the delta/5 form of
    // the AmMdelta inequality does not hold.
    let out = shortcut(&[
        "verify", "--region", "AmMdelta", "--delta", "0.1", "--points", "2000",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_grad_small() {
    let out = shortcut(&[
        "check-grad",
        "--samples",
        "50000",
        "--states",
        "6",
        "--seed",
        "7",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert_eq!(json(&out)["report"]["fd_ok"], true);
}

#[test]
fn run_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("ssw");
    let out = shortcut(&[
        "run",
        "--variant",
        "ssw",
        "--out",
        stem.to_str().unwrap(),
        "--monitors",
        "sum_bound",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["outcome"]["outcome"], "converged_global");
    let csv = fs::read_to_string(dir.path().join("ssw.csv")).unwrap();
    assert!(csv.starts_with("t,phi,a_dot_astar,w_err_sq,a_err_sq,loss\n"));
    assert!(dir.path().join("ssw.svg").exists());
}

#[test]
fn run_monitor_violation_exits_two() {
    // The fixed start is outside the acute cone, so the stage-one angle
    // monitor fires at t = 0.
    let out = shortcut(&["run", "--max-iters", "50", "--monitors", "stage1_angle"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[show_teacher]\nk = 36\n").unwrap();
    let out = shortcut(&["--config", cfg.to_str().unwrap(), "show-teacher"]);
    assert_eq!(json(&out)["teacher"]["k"], 36);
    let out = shortcut(&[
        "--config",
        cfg.to_str().unwrap(),
        "show-teacher",
        "--k",
        "49",
    ]);
    assert_eq!(json(&out)["teacher"]["k"], 49);
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(shortcut(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(shortcut(&["sweep", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        shortcut(&["show-teacher", "--k", "20"]).status.code(),
        Some(1)
    );
    assert_eq!(
        shortcut(&["verify", "--region", "Q"]).status.code(),
        Some(1)
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[sweep]\ntrails = 3\n").unwrap();
    assert_eq!(
        shortcut(&["--config", cfg.to_str().unwrap(), "sweep"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        shortcut(&["--config", "/nonexistent.toml", "sweep"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn help_exits_zero() {
    assert_eq!(shortcut(&["--help"]).status.code(), Some(0));
}
