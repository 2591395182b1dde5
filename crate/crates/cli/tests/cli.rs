use std::path::Path;
use std::process::{Command, Output};

fn bwe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bwe"))
        .args(args)
        .current_dir(dir)
        .env_remove("BWE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).expect("stderr is JSON")
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwe(
        dir.path(),
        &["simulate", "--family", "low_bw", "--suite", "default"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = bwe(
        dir.path(),
        &[
            "simulate",
            "--family",
            "no_such_family",
            "--policy",
            "oracle",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_weights_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwe(
        dir.path(),
        &[
            "evaluate",
            "--family",
            "low_bw",
            "--policy",
            "weights:nope.bin",
            "--out",
            "r",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["error"], "policy");
}

#[test]
fn evaluate_without_policy_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwe(
        dir.path(),
        &["evaluate", "--family", "low_bw", "--out", "r"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"], "config");
}

#[test]
fn missing_dataset_exit_7() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwe(dir.path(), &["train", "--data", "absent", "--out", "m"]);
    assert_eq!(o.status.code(), Some(7));
    assert_eq!(error_json(&o)["error"], "data");
}

#[test]
fn traces_writes_files_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwe(
        dir.path(),
        &[
            "traces",
            "--suite",
            "default",
            "--duration-ms",
            "30000",
            "--out",
            "t",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let first: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
    assert_eq!(first["command"], "traces");
    let n = std::fs::read_dir(dir.path().join("t")).unwrap().count();
    assert_eq!(n, 16);
}

#[test]
fn evaluate_writes_report_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let o = bwe(
        dir.path(),
        &[
            "evaluate",
            "--family",
            "burst_loss",
            "--duration-ms",
            "10000",
            "--policy",
            "heuristic",
            "--policy",
            "constant:1000000",
            "--out",
            "r",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "family,policy,mse_mbps2,e_plus,e_minus,score,ci_low,ci_high"
    );
    assert_eq!(lines.count(), 2);
    for metric in ["receiving_rate", "queuing_delay", "loss", "reward"] {
        let svg =
            std::fs::read_to_string(dir.path().join(format!("r/burst_loss_{metric}.svg"))).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bwe"))
        .args(["traces", "--family", "high_bw", "--duration-ms", "10000"])
        .current_dir(dir.path())
        .env("BWE_OUT_DIR", "envout")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        std::fs::read_dir(dir.path().join("envout"))
            .unwrap()
            .count(),
        1
    );
}
