//! End-to-end runs of the command-line tool: exit codes, report formats and
//! determinism.

use std::process::{Command, Output};

use elliptic_rigidity::curve::CurveSpec;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elliptic-rigidity")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn analyze_so2_passes() {
    let out = run(&["analyze-curve", "--curve", "builtin:so2", "--samples", "512"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["result"]["c_star"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert_eq!(v["result"]["k_measured"].as_f64(), Some(0.0));
    assert_eq!(v["input_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn degenerate_curve_exits_2() {
    let out = run(&["analyze-curve", "--curve", "builtin:kc:c=1.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["result"]["elliptic"], false);
}

#[test]
fn malformed_input_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,m11\n0,1\n").unwrap();
    let out = run(&["analyze-curve", "--curve", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(run(&["t4", "--a", "-1"]).status.code(), Some(64));
}

#[test]
fn excluded_t4_parameter_exits_65() {
    // theta_a = pi/8 lies on (pi/48) Z
    let a = 1.0 / (std::f64::consts::PI / 8.0).tan() - 1.0;
    let out = run(&["t4", "--a", &a.to_string(), "--grid", "64", "--depth", "1"]);
    assert_eq!(out.status.code(), Some(65));
}

#[test]
fn csv_curve_file_is_accepted_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kc.csv");
    std::fs::write(&path, CurveSpec::kc(0.5).to_csv(256).unwrap()).unwrap();
    let a = run(&["analyze-curve", "--curve", path.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let k = json(&a)["result"]["k_measured"].as_f64().unwrap();
    assert!((k - 0.5).abs() < 1e-3);
    // changing the file contents changes the hash
    std::fs::write(&path, CurveSpec::kc(0.4).to_csv(256).unwrap()).unwrap();
    let b = run(&["analyze-curve", "--curve", path.to_str().unwrap()]);
    assert_ne!(json(&a)["input_sha256"], json(&b)["input_sha256"]);
}

#[test]
fn solve_pde_recovers_harmonic_data() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("u.gridmap");
    let out = run(&[
        "solve-pde", "--curve", "builtin:so2", "--boundary", "harmonic:x2-y2", "--n", "65", "--tol", "1e-10",
        "--map-out", map.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["result"]["final_residual"].as_f64().unwrap() <= 1e-10);
    assert!(v["result"]["deviation_from_boundary_map"].as_f64().unwrap() <= 1e-10);
    let u = elliptic_rigidity::io::read_gridmap(&map).unwrap();
    assert_eq!(u.grid.n, 65);
}

#[test]
fn stalled_solver_exits_4() {
    let out = run(&["solve-pde", "--curve", "builtin:kc:c=0.5", "--boundary", "harmonic:xy", "--n", "33", "--tol", "1e-30", "--max-iter", "3"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn rigidity_csv_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = run(&[
        "rigidity", "--curve", "builtin:kc:c=0.5", "--gen", "affine_plus_bump", "--amps", "1e-1,1e-2,1e-3", "--n", "65",
        "--report", report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("curve,generator,eps_amp,eps,q_star,ratio,s0,j0"));
    let ratios: Vec<f64> = lines.map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).collect();
    assert_eq!(ratios.len(), 3);
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!(v["result"]["ratio_spread"].as_f64().unwrap() <= 10.0);
}

#[test]
fn t4_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("lam.csv");
    let out = run(&["t4", "--a", "1.0", "--eps", "0.02", "--grid", "512", "--seed", "7", "--depth", "3", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["result"]["verification"]["ellipticity"]["min_sigma2"].as_f64().unwrap() > 0.0);
    assert!(v["result"]["verification"]["rank_one"]["min_ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(v["result"]["m_bounded_below"], true);
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some("depth,eps_d,m_d,c_mass"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn reports_are_deterministic() {
    let args = ["t4", "--grid", "256", "--depth", "2", "--seed", "3"];
    let (a, b) = (run(&args), run(&[&args[..], &["--threads", "1"]].concat()));
    let (mut va, mut vb) = (json(&a), json(&b));
    // the thread cap is part of the recorded configuration, the results are not affected
    assert_eq!(va["result"], vb["result"]);
    va["config"]["common"]["threads"] = serde_json::Value::Null;
    vb["config"]["common"]["threads"] = serde_json::Value::Null;
    assert_eq!(va["config"], vb["config"]);
    assert_eq!(run(&args).stdout, a.stdout);
}

#[test]
fn dump_config_prints_resolved_flags() {
    let out = run(&["rigidity", "--dump-config", "--n", "33"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["command"]["rigidity"]["n"], 33);
    assert_eq!(v["command"]["rigidity"]["generator"], "affine_plus_bump");
}
