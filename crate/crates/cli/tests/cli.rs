use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONSTANT: &str = r#"
seed = 5
y = [[1.0], [2.0]]
lambda = [[0.0], [0.4]]

[grid]
dim = 1
n = 64

[potential]
kind = "constant"
value = 0.5

[mc]
npaths = 1000
survival_npaths = 1000
survival_dt = 1e-2
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_lyapvar"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("out/report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn without_timing(mut v: Value) -> String {
    v.as_object_mut().unwrap().remove("timing");
    serde_json::to_string(&v).unwrap()
}

fn hash_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .find(|l| l.starts_with("determinism hash:"))
        .unwrap()
        .to_string()
}

#[test]
fn lyapunov_on_constant_potential() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), CONSTANT, &["lyapunov"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let rows = r["results"]["lyapunov"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let g = &rows[0]["gamma"];
    for key in ["value_root", "value_infsup", "value_supinf"] {
        assert!((g[key].as_f64().unwrap() - 1.0).abs() < 1e-2);
    }
    assert!((rows[1]["r_sigma"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((r["results"]["survival"]["slope"].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn reports_are_identical_across_runs_and_workers() {
    for cmd in ["gamma", "mc", "rtransform"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let oa = run(a.path(), CONSTANT, &[cmd, "--workers", "1"]);
        let ob = run(b.path(), CONSTANT, &[cmd, "--workers", "3"]);
        assert_eq!(oa.status.code(), Some(0));
        assert_eq!(without_timing(report(a.path())), without_timing(report(b.path())), "{cmd}");
        assert_eq!(hash_line(&oa), hash_line(&ob));
    }
}

#[test]
fn seed_flag_changes_monte_carlo_only_through_the_seed() {
    let cosine = CONSTANT.replace("kind = \"constant\"\nvalue = 0.5", "kind = \"cosine\"\nmean = 1.0");
    let cosine = cosine.replace("[mc]", "[mc]\nsurvival = false");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path(), &cosine, &["mc", "--seed", "1"]);
    run(b.path(), &cosine, &["mc", "--seed", "2"]);
    let (ra, rb) = (report(a.path()), report(b.path()));
    assert_eq!(ra["config"]["seed"], 1);
    let est = |r: &Value| r["results"]["free_energy"][0]["estimate"]["value"].as_f64().unwrap();
    assert_ne!(est(&ra), est(&rb));
}

#[test]
fn unknown_key_exits_4_without_compute() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONSTANT.replace("[mc]", "[mc]\nnpath = 10");
    let out = run(dir.path(), &bad, &["gamma"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!dir.path().join("out/report.json").exists());
    let bad = CONSTANT.replace("value = 0.5", "value = 0.5\ncolour = 1");
    assert_eq!(run(dir.path(), &bad, &["gamma"]).status.code(), Some(4));
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.replace("y = [[1.0], [2.0]]", "y = []");
    let out = run(dir.path(), &cfg, &["sweep"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("y_0,lambda_0,gamma_root"));
}

#[test]
fn sweep_is_homogeneous_in_y() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.replace("y = [[1.0], [2.0]]", "y = [[0.5], [1.0], [2.0]]");
    let out = run(dir.path(), &cfg, &["sweep"]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let y: f64 = r[0].parse().unwrap();
        let g: f64 = r[2].parse().unwrap();
        assert!((g / y - 1.0).abs() < 1e-2);
        assert_eq!(&r[8], "ok");
    }
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), CONSTANT, &["rtransform"]);
    let text = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
    assert_eq!(v["command"], "rtransform");
    assert!(v["timing"]["total_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn failed_check_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // an impossible tolerance makes the route agreement check fail
    let cfg = format!("{CONSTANT}\n[checks]\nroute_tol = 0.0\n").replace("y = [[1.0], [2.0]]", "y = [[1.0]]");
    let cfg = cfg.replace("[mc]", "[mc]\nsurvival = false");
    let out = run(dir.path(), &cfg, &["lyapunov"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let out = Command::new(env!("CARGO_BIN_EXE_lyapvar"))
        .arg("selftest")
        .arg("--out")
        .arg(tempfile::tempdir().unwrap().path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 8);
}
