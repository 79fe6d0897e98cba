//! End-to-end runs of the `renorm-lab` binary, checking exit codes and written files.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_renorm-lab"));
    c.env_remove("RENORMLAB_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let out = dir.join(format!("{name}-out"));
    let text = format!("output = {:?}\n{body}", out);
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const EXAMPLE_N: &str = "depth = 5\nlattice = 4\npoints = 50\nseed = 3\n[map]\nfamily = \"example-n\"\nc = 0.02\neta = { kind = \"sine\", amp = 0.1, freq = 1.0 }\n";

#[test]
fn fixedpoint_summary_and_json() {
    let out = run(&["fixedpoint", "--degree", "14"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sigma = -0.3995"));
    let out = run(&["fixedpoint", "--degree", "14", "--json"]);
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["coeffs"].as_array().unwrap().len(), 15);
    assert!((v["sigma"].as_f64().unwrap() + 0.3995).abs() < 1e-4);
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn insufficient_degree_is_a_solver_failure() {
    let out = run(&["fixedpoint", "--degree", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient degree"));
}

#[test]
fn holder_flag() {
    let out = run(&["geometry", "--holder", "b1=0.25", "b1t=0.0625"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["holder_bound"].as_f64(), Some(0.75));
    let out = run(&["geometry", "--holder", "b1=0.1", "b1t=0.2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["geometry", "--holder", "b1=0.1", "bogus=0.2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn criterion_flag() {
    let out = run(&[
        "geometry",
        "--criterion",
        "b1=0.05",
        "kmax=5",
        "sigma=-0.3995",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = json(&out)["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[4]["k"], 4);
    assert_eq!(rows[4]["n"], 4 + 52);
    let out = run(&["geometry", "--criterion", "b1=1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(
        dir.path(),
        "bad",
        "depth = 0\n[map]\nfamily = \"degenerate\"\n",
    );
    assert_eq!(run(&["verify", "-c", &bad]).status.code(), Some(1));
    let missing = dir.path().join("none.toml");
    assert_eq!(
        run(&["verify", "-c", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    let budget = write_config(
        dir.path(),
        "budget",
        "[map]\nfamily = \"example-n\"\nc = 0.5\n",
    );
    assert_eq!(run(&["verify", "-c", &budget]).status.code(), Some(1));
    let ok = write_config(
        dir.path(),
        "threads",
        "depth = 2\n[map]\nfamily = \"degenerate\"\n",
    );
    let out = bin()
        .args(["verify", "-c", &ok])
        .env("RENORMLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_example_n_depth_five_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ex", EXAMPLE_N);
    let out = bin()
        .args(["verify", "-c", &cfg])
        .env("RENORMLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("ex-out/verify.json")).unwrap())
            .unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["seed"], 3);
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 15);
}

#[test]
fn corrupted_delta_exits_three_naming_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let body = "depth = 3\nlattice = 3\npoints = 20\n[map]\nfamily = \"example-n\"\ninject_class_n = 1e-3\n";
    let cfg = write_config(dir.path(), "bad", body);
    let out = run(&["verify", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("class_n_invariance"));
    assert!(dir.path().join("bad-out/verify.json").exists());
}

#[test]
fn degenerate_marks_diffeomorphism_checks_not_applicable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "deg",
        "depth = 3\nlattice = 3\n[map]\nfamily = \"degenerate\"\n",
    );
    let out = run(&["verify", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("deg-out/verify.json")).unwrap())
            .unwrap();
    let checks = report["checks"].as_array().unwrap();
    let status = |name: &str| checks.iter().find(|c| c["name"] == name).unwrap()["status"].clone();
    assert_eq!(status("class_n_invariance"), "n/a");
    assert_eq!(status("jacobian_recursion"), "n/a");
    assert_eq!(status("boxing_dynamics"), "pass");
    assert_eq!(run(&["universal", "-c", &cfg]).status.code(), Some(1));
}

#[test]
fn cascade_writes_frame_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cas",
        "depth = 4\n[map]\nfamily = \"example-n\"\n",
    );
    assert_eq!(run(&["cascade", "-c", &cfg]).status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("cas-out/frames.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("k,n,alpha,sigma_nk,t,u,d,r_norm,r_prime_norm,a_nk")
    );
    assert_eq!(lines.count(), 10);
    let doc: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("cas-out/cascade.json")).unwrap())
            .unwrap();
    assert_eq!(doc["sigmas"].as_array().unwrap().len(), 4);
}

#[test]
fn universal_trivial_extension() {
    let dir = tempfile::tempdir().unwrap();
    let body = "depth = 4\n[map]\nfamily = \"trivial-extension\"\nb = 0.1\neps = [[0.05, 0, 1, 0], [0.01, 1, 1, 0]]\ntheta = [-0.04155070314496773, 0.03597080411677924]\n";
    let cfg = write_config(dir.path(), "triv", body);
    let out = run(&["universal", "-c", &cfg]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("triv-out/universal.json")).unwrap())
            .unwrap();
    assert!((doc["b2"].as_f64().unwrap() - 0.1).abs() <= 1e-12);
    assert!(doc["b1_b2_minus_b_f"].as_f64().unwrap().abs() <= 1e-15);
    assert_eq!(doc["schema"], 1);
}

#[test]
fn geometry_scan_depth_six() {
    let dir = tempfile::tempdir().unwrap();
    let body = "depth = 6\n[map]\nfamily = \"trivial-extension\"\nb = 0.1\neps = [[0.05, 0, 1, 0], [0.01, 1, 1, 0]]\ntheta = [-0.04155070314496773, 0.03597080411677924]\n";
    let cfg = write_config(dir.path(), "geo", body);
    let out = run(&["geometry", "-c", &cfg, "--kmax", "3"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("geo-out/geometry.csv")).unwrap();
    assert!(csv.starts_with("k,n,word,diam_wv,diam_wc,dist_min,"));
    assert!(csv.lines().count() > 6);
    let summary: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("geo-out/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["schema"], 1);
    assert!(summary["diameter_fit"]["violations"]
        .as_array()
        .unwrap()
        .is_empty());
    assert_eq!(
        run(&["geometry", "-c", &cfg, "--kmax", "4"]).status.code(),
        Some(1)
    );
}
