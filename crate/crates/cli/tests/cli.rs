use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{"benchmark": "carrier_plate", "lambda": 0.1, "fine_mesh": [12, 12], "coarse_mesh": [4, 4],
    "kl": {"n_modes": 3}, "sampling": {"kind": "monte_carlo", "n": 12, "seed": 3}, "max_iters": 3}"#;

fn topopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topopt")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = topopt(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("iter,Q,mu,sigma,volume,change,n_hi_solves"));
    assert_eq!(history.lines().count(), 4);
    assert!(fs::read_to_string(out.join("density.pgm")).unwrap().starts_with("P2\n12 12\n255\n"));
    let info: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run_info.json")).unwrap()).unwrap();
    assert_eq!(info["command"], "run");
    assert_eq!(info["config"]["fine_mesh"][0], 12);
    assert!(info["timings"]["fine_solves_s"].as_f64().unwrap() >= 0.0);
    assert!(!info["version"].as_str().unwrap().is_empty());
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let read = |name: &str| {
        let out = dir.path().join(name);
        assert!(topopt(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
        fs::read(out.join("history.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "");
    let o = topopt(&["run", "--config", &empty]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("benchmark"));

    let unknown = write_config(dir.path(), r#"{"benchmark": "l_bracket", "lambda": 0.1, "colour": 1}"#);
    assert_eq!(topopt(&["run", "--config", &unknown]).status.code(), Some(2));

    let unseeded = write_config(dir.path(), r#"{"benchmark": "carrier_plate", "lambda": 0.1}"#);
    assert_eq!(topopt(&["run", "--config", &unseeded]).status.code(), Some(2));
}

#[test]
fn sweep_and_certify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = topopt(&["sweep-n", "--config", &cfg, "--n-max", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("sweep_n.csv")).unwrap().lines().count(), 5);

    let o = topopt(&["certify", "--config", &cfg, "--iter", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let certs = fs::read_to_string(out.join("certificates.csv")).unwrap();
    let header: Vec<&str> = certs.lines().next().unwrap().split(',').collect();
    let row: Vec<f64> = certs.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert!(col("actual_u") <= col("bound_u") * (1.0 + 1e-9));
}

#[test]
fn stress_study_writes_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"benchmark": "l_bracket", "lambda": 0.1, "fine_mesh": [10, 10], "coarse_mesh": [5, 5], "kl": {"n_modes": 2}, "n_important": 3}"#,
    );
    let out = dir.path().join("out");
    let o = topopt(&[
        "stress-study", "--config", &cfg, "--mc-samples", "20", "--mc-batch", "10", "--n-hi", "3",
        "--reference-level", "3", "--uniform", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("stress.csv")).unwrap();
    assert!(csv.contains("bifi") && csv.contains("mc"), "{csv}");
}
