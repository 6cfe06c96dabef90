use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nadir(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nadir"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

#[test]
fn deterministic_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = nadir(dir.path(), &["deterministic", "--svg"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(dir.path(), "deterministic_summary.json");
    let n1 = summary[0]["nadir"].as_f64().unwrap();
    let n2 = summary[1]["nadir"].as_f64().unwrap();
    assert!((n1 + 0.0699).abs() < 5e-4 && (n2 + 0.1397).abs() < 1e-3);
    let csv = read(dir.path(), "deterministic.csv");
    assert!(csv.starts_with("t,theta_dot_k1,theta_dot_k2\n"));
    assert_eq!(csv.lines().count(), 2002);
    assert!(read(dir.path(), "deterministic.svg").starts_with("<svg"));
}

#[test]
fn deterministic_zero_outages_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = nadir(dir.path(), &["deterministic"], Some(r#"{"deterministic": {"k": [0], "points": 11}}"#));
    assert!(out.status.success());
    for line in read(dir.path(), "deterministic.csv").lines().skip(1) {
        assert_eq!(line.split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn most_likely_headline_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = nadir(dir.path(), &["most-likely", "--dump-matrices"], Some("{}"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(dir.path(), "most_likely.json");
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        [
            "J_gauss", "J_jump", "J_total", "c_star", "k_star", "nadir", "p_star_T", "per_k", "seed", "status",
            "t_nadir"
        ]
    );
    assert_eq!(v["k_star"], 1);
    assert!((v["p_star_T"].as_f64().unwrap() + 1.27).abs() < 0.05);
    assert_eq!(v["c_star"].as_array().unwrap().len(), 3);
    let traj = read(dir.path(), "trajectory.csv");
    assert!(traj.starts_with("t,theta_dot,p_star,renewable\n"));
    let m = json(dir.path(), "matrices.json");
    assert_eq!(m["b1"].as_array().unwrap().len(), 7);
}

#[test]
fn most_likely_conventional_regime() {
    let dir = tempfile::tempdir().unwrap();
    let out = nadir(dir.path(), &["most-likely"], Some(r#"{"noise": {"sigma": 0.0628, "lambda": 1e-3}}"#));
    assert!(out.status.success());
    assert_eq!(json(dir.path(), "most_likely.json")["k_star"], 2);
}

#[test]
fn free_outages_cost_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = nadir(dir.path(), &["most-likely"], Some(r#"{"noise": {"sigma": 0.2916, "lambda": 1.0}}"#));
    assert!(out.status.success());
    let v = json(dir.path(), "most_likely.json");
    assert!(v["J_total"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(v["k_star"], 2);
}

#[test]
fn output_is_reproducible_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = r#"{"sweep": {"axes": [{"name": "sigma", "min": 0.1, "max": 0.5, "points": 3}]}, "boundary": {"enabled": false}}"#;
    assert!(nadir(a.path(), &["sweep", "--threads", "1", "--seed", "5"], Some(cfg)).status.success());
    assert!(nadir(b.path(), &["sweep", "--threads", "3", "--seed", "5"], Some(cfg)).status.success());
    assert_eq!(read(a.path(), "sweep.csv"), read(b.path(), "sweep.csv"));
    assert!(nadir(a.path(), &["most-likely", "--threads", "1"], None).status.success());
    assert!(nadir(b.path(), &["most-likely", "--threads", "2"], None).status.success());
    assert_eq!(read(a.path(), "most_likely.json"), read(b.path(), "most_likely.json"));
}

#[test]
fn sweep_csv_schema_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "sweep": {"axes": [
            {"name": "sigma", "min": 0.03, "max": 0.5, "points": 2},
            {"name": "lambda", "min": 1e-10, "max": 1e-1, "points": 2, "spacing": "log"}
        ]}
    }"#;
    let out = nadir(dir.path(), &["sweep", "--svg"], Some(cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "sweep.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sigma,lambda,mu,gamma,J_star,k_star,p_star_T,gaussian_part,jump_part,class,status"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[5], "2");
    assert_eq!(first[9], "conventional");
    assert!((first[4].parse::<f64>().unwrap() - 4.60517).abs() < 0.02);
    let pb = json(dir.path(), "phase_boundary.json");
    assert!((pb["boundary"]["sigma"].as_f64().unwrap() - 0.28).abs() < 0.02);
    assert!(read(dir.path(), "sweep_class.svg").contains("conventional"));
}

#[test]
fn inertia_row_matches_most_likely() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"inertia": {"min": 12.0, "max": 12.0, "points": 1}}"#;
    assert!(nadir(dir.path(), &["inertia-sweep"], Some(cfg)).status.success());
    assert!(nadir(dir.path(), &["most-likely"], Some(cfg)).status.success());
    let csv = read(dir.path(), "inertia.csv");
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let v = json(dir.path(), "most_likely.json");
    assert_eq!(row[1].parse::<f64>().unwrap(), v["J_total"].as_f64().unwrap());
    assert_eq!(row[2], v["k_star"].to_string());
    assert_eq!(row[3].parse::<f64>().unwrap(), v["p_star_T"].as_f64().unwrap());
}

#[test]
fn simulate_writes_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"simulation": {"n_paths": 200}, "output": {"histogram_bins": 10}}"#;
    let out = nadir(dir.path(), &["simulate"], Some(cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(dir.path(), "simulation.json");
    assert_eq!(v["n_paths"], 200);
    let hist = read(dir.path(), "nadir_histogram.csv");
    assert!(hist.starts_with("lower,upper,count\n"));
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 200);
}

#[test]
fn validate_passes_and_detects_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let fast = r#""random_cases": 10, "discrete_grid": 1000, "mc_paths": 2000"#;
    let ok = nadir(dir.path(), &["validate"], Some(&format!(r#"{{"validation": {{{fast}}}}}"#)));
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    assert_eq!(json(dir.path(), "validation.json")["passed"], true);

    let bad = nadir(
        dir.path(),
        &["validate"],
        Some(&format!(r#"{{"validation": {{"mutation": "van-loan-no-transpose", {fast}}}}}"#)),
    );
    assert_eq!(bad.status.code(), Some(2));
    let report = json(dir.path(), "validation.json");
    let zero = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "zero-action-identity").unwrap();
    assert_eq!(zero["passed"], false);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nadir(dir.path(), &["most-likely"], Some(r#"{"bogus": 1}"#)).status.code(), Some(1));
    assert_eq!(nadir(dir.path(), &["most-likely"], Some(r#"{"system": {"mu": -1}}"#)).status.code(), Some(1));
    assert_eq!(nadir(dir.path(), &["frobnicate"], None).status.code(), Some(1));
}

#[test]
fn overflow_guard_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = nadir(dir.path(), &["most-likely"], Some(r#"{"system": {"mu": 1.0}}"#));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // The fallback result is still written.
    assert_eq!(json(dir.path(), "most_likely.json")["status"], "ill-conditioned");
}
