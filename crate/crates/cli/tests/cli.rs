use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn reclab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reclab"));
    cmd.args(args).env_remove("RECLAB_JOBS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_clt() -> Value {
    json!({
        "system": {"kind": "doubling"},
        "measure": {"named": "lebesgue"},
        "schedule": {"mode": "implicit", "M": {"form": "pow", "gamma": 0.5}},
        "n": 1000,
        "samples": 200,
        "seed": 7,
        "params": {"ks_tol": 0.2, "charfn_tol": 0.2}
    })
}

#[test]
fn help_lists_every_experiment() {
    let out = reclab(&["--help"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "clt-recurrence",
        "clt-target",
        "variance-report",
        "short-returns",
        "poisson-count",
        "transfer-diagnostics",
        "sinai-check",
        "sbc-ratio",
    ] {
        assert!(text.contains(kind), "{kind} missing from help");
    }
}

#[test]
fn report_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "clt.json", &small_clt());
    let one = reclab(&["clt-recurrence", "--config", &cfg, "--jobs", "1"], &[]);
    let two = reclab(&["clt-recurrence", "--config", &cfg], &[("RECLAB_JOBS", "2")]);
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(two.status.code(), Some(0));
    assert_eq!(one.stdout, two.stdout);
    let report: Value = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(report["config"]["kind"], "clt-recurrence");
    assert_eq!(report["pass"], true);
    let ks = report["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["name"] == "ks")
        .unwrap();
    assert!(ks["se"].as_f64().unwrap() > 0.0);
    assert_eq!(ks["tolerance"]["kind"], "at-most");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "clt.json", &small_clt());
    let base = reclab(&["clt-recurrence", "--config", &cfg], &[]);
    let other = reclab(&["clt-recurrence", "--config", &cfg, "--seed", "8"], &[]);
    let report: Value = serde_json::from_slice(&other.stdout).unwrap();
    assert_eq!(report["config"]["seed"], 8);
    assert_ne!(base.stdout, other.stdout);
}

#[test]
fn out_dir_receives_json_csv_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "clt.json", &small_clt());
    let out_dir = dir.path().join("run");
    let out = reclab(
        &[
            "clt-recurrence",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--plot-script",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    for f in ["report.json", "sums.csv", "cdf.csv", "plot.py"] {
        assert!(out_dir.join(f).exists(), "{f} not written");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert!(report["metrics"].as_array().unwrap().len() >= 4);
}

#[test]
fn tolerance_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_clt();
    v["params"]["ks_tol"] = json!(0.0);
    let cfg = write_config(dir.path(), "strict.json", &v);
    let out = reclab(&["clt-recurrence", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL ks"));
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_clt();
    v["samples"] = json!(1);
    let cfg = write_config(dir.path(), "bad.json", &v);
    let out = reclab(&["variance-report", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("samples: need at least 2"), "{err}");

    let mut v = small_clt();
    v["kind"] = json!("clt-target");
    let cfg = write_config(dir.path(), "mismatch.json", &v);
    assert_eq!(
        reclab(&["clt-recurrence", "--config", &cfg], &[]).status.code(),
        Some(1)
    );
    assert_eq!(
        reclab(&["clt-recurrence", "--config", "/nonexistent.json"], &[])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(reclab(&["clt-recurrence", "--bogus"], &[]).status.code(), Some(1));
}

#[test]
fn sinai_check_from_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sinai.json",
        &json!({"system": {"kind": "golden-mean"}, "n": 5, "samples": 100, "seed": 3}),
    );
    let out = reclab(&["sinai-check", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
