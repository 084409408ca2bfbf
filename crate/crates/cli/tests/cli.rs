use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_petriflow"));
    c.env_remove("PETRIFLOW_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn tmpdir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("petriflow-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn generate_then_bound_from_file() {
    let dir = tmpdir("gen");
    let f = dir.join("grid3.pnml");
    let o = run(&["generate", "wavefront", "--n", "3", "--variant", "grid", "-o", f.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("grid3.pnml.timing.json").exists());
    let o = run(&["--format", "json", "bounds", f.to_str().unwrap()]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["result"]["gamma_min"].as_f64().unwrap() - 0.101).abs() < 1e-9);
    assert!((v["result"]["gamma_max"].as_f64().unwrap() - 0.408).abs() < 1e-9);
    let digests = v["manifest"]["inputs"].as_array().unwrap();
    assert_eq!(digests.len(), 2);
    assert_eq!(digests[0]["sha256"].as_str().unwrap().len(), 64);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn parse_and_analyze_shipped_models() {
    for m in ["cp.lang", "dtp.lang", "wavefront3.lang"] {
        let p = models().join(m);
        let o = run(&["parse", p.to_str().unwrap()]);
        assert!(o.status.success(), "{m}: {}", String::from_utf8_lossy(&o.stderr));
        let o = run(&["analyze", p.to_str().unwrap()]);
        assert!(stdout(&o).contains("live: true"), "{m}");
    }
    let p = models().join("wavefront3.lang");
    let o = run(&["analyze", p.to_str().unwrap(), "--lead", "Sync_2_2,Sync_2_3", "--lead", "Sync_2_2,Sync_1_2"]);
    let out = stdout(&o);
    assert!(out.contains("lead(Sync_2_2 over Sync_2_3): 1"), "{out}");
    assert!(out.contains("lead(Sync_2_2 over Sync_1_2): 0"), "{out}");
}

#[test]
fn canonical_form_reparses() {
    let p = models().join("cp.lang");
    let first = stdout(&run(&["parse", "--canonical", p.to_str().unwrap()]));
    let dir = tmpdir("canon");
    let q = dir.join("cp.lang");
    std::fs::write(&q, &first).unwrap();
    let second = stdout(&run(&["parse", "--canonical", q.to_str().unwrap()]));
    assert_eq!(first, second);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["bounds"]).status.code(), Some(2));
    assert_eq!(run(&["bounds", "/nonexistent/model.lang"]).status.code(), Some(1));
    let dir = tmpdir("bad");
    let f = dir.join("bad.lang");
    std::fs::write(&f, "Component X {\n  Behaviour { Places P; }\n}\n").unwrap();
    let o = run(&["parse", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.lang:2:"), "{err}");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn simulation_is_seeded_and_threads_are_recorded() {
    let args = ["--format", "json", "simulate", "wavefront:grid:1", "--firings", "2000", "--replications", "3", "--seed", "42"];
    let a: Value = serde_json::from_str(&stdout(&run(&args))).unwrap();
    let o = bin().args(args).env("PETRIFLOW_THREADS", "1").output().unwrap();
    let b: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(a["result"]["throughput"], b["result"]["throughput"]);
    assert_eq!(b["manifest"]["threads"], 1);
    assert_eq!(b["manifest"]["seed"], 42);
}

#[test]
fn sweep_csv_has_header_and_rows() {
    let dir = tmpdir("sweep");
    let f = dir.join("s.csv");
    let o = run(&[
        "sweep", "wavefront:grid:1", "--firings", "500", "--replications", "2", "--srv-family", "normal", "--srv-covs", "0.1,0.3",
        "-o", f.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&f).unwrap();
    assert!(csv.contains("# seed=1"));
    assert!(csv.contains("inj_family,inj_cov,srv_family,srv_cov,mean_throughput,ci_halfwidth"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("exponential,")).count(), 2);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn cost_report() {
    let o = run(&["cost", "--alpha", "0.1", "--beta", "0.001", "--gamma", "0.1", "--n", "1000", "--p", "0.01", "--cpus", "9", "--measured", "4.95", "--bound", "9.9"]);
    let out = stdout(&o);
    assert!(out.contains("functional cost: 9.000000"), "{out}");
    assert!(out.contains("dilation: 2.000000"), "{out}");
    assert!(out.contains("operational cost: 18.000000"), "{out}");
    assert_eq!(run(&["cost", "--alpha=-1", "--beta", "0", "--gamma", "0", "--n", "1", "--p", "1", "--cpus", "1"]).status.code(), Some(1));
}

#[test]
fn gspn_small_model() {
    let o = run(&["--format", "json", "gspn", "wavefront:grid:1", "--solver", "dense"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["states"], 16);
    let x = v["result"]["throughput"]["OZ_1"].as_f64().unwrap();
    assert!(x > 0.0 && x < 10.0);
}
