//! End-to-end checks of the `stablab` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn stablab(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_stablab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(stablab(&["residual_check"], &a), 0);
    assert_eq!(stablab(&["residual_check"], &b), 0);
    let files = manifest(&a)["files"].as_array().unwrap().clone();
    assert!(!files.is_empty());
    for f in files {
        let name = f.as_str().unwrap();
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(manifest(&a)["config_sha256"], manifest(&b)["config_sha256"]);
}

#[test]
fn config_errors_exit_2_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, args) in [
        vec!["no_such_experiment"],
        vec!["toy_oracle", "--set", "toy.bogus=1"],
        vec!["toy_oracle", "--set", "toy.k_list=[0, 1]"],
        vec!["nonlinear_decay", "--set", "grid.my=7"],
    ]
    .into_iter()
    .enumerate()
    {
        let dir = tmp.path().join(i.to_string());
        assert_eq!(stablab(&args, &dir), 2, "{args:?}");
        let m = manifest(&dir);
        assert_eq!(m["exit_code"], 2);
        assert_eq!(m["status"], "config_error");
        assert!(m["error"].is_string());
    }
}

#[test]
fn failed_check_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fail");
    assert_eq!(stablab(&["residual_check", "--set", "residual.max_relative=1e-12"], &dir), 1);
    assert_eq!(manifest(&dir)["status"], "fail");
}

#[test]
fn step_underflow_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("numerical");
    assert_eq!(stablab(&["toy_oracle", "--set", "toy.rtol=1e-30"], &dir), 3);
    let m = manifest(&dir);
    assert_eq!(m["status"], "numerical_failure");
    assert!(m["files"].as_array().unwrap().is_empty());
}
