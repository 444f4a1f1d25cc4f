use std::process::Command;

use morin_cli::{run, Outcome, SCHEMA_VERSION};
use serde_json::Value;

fn scene(name: &str) -> String {
    format!("{}/../../scenes/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn morin(args: &[&str]) -> Outcome {
    run(std::iter::once("morin").chain(args.iter().copied()))
}

fn json(o: &Outcome) -> Value {
    serde_json::from_str(&o.stdout)
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {}\n{}", o.stdout, o.stderr))
}

#[test]
fn report_has_schema_digest_and_options() {
    let o = morin(&["strata", &scene("constant"), "--depth", "1", "--no-timings"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let r = json(&o);
    assert_eq!(r["schema_version"], SCHEMA_VERSION);
    assert_eq!(r["command"], "strata");
    assert_eq!(r["scene"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["options"]["depth"], 1);
    assert!(r["options"]["tol_residual"].as_f64().unwrap() > 0.0);
    assert!(r.get("timings").is_none());
    let points = r["results"]["strata"][0]["points"].as_array().unwrap();
    assert!(points.is_empty());
}

#[test]
fn timings_present_by_default() {
    let o = morin(&["strata", &scene("constant"), "--depth", "1"]);
    assert!(json(&o)["timings"]["total_ms"].as_f64().is_some());
}

#[test]
fn ex7_check_is_morin() {
    let o = morin(&["check", &scene("ex7"), "--no-timings"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let msg = json(&o)["status"]["message"].as_str().unwrap().to_string();
    assert_eq!(
        msg,
        "Morin, strata: A1 (curve, 2 components), A2 (2 points)"
    );
}

#[test]
fn sphere_v_check_exit_2_names_witness() {
    let o = morin(&["check", &scene("sphere_v"), "--no-timings"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("∇δ_2 ≈ 0"), "{}", o.stderr);
    assert_eq!(json(&o)["status"]["verdict"], "no");
}

#[test]
fn malformed_and_missing_scenes_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scene]\nambient_dim = 3\n").unwrap();
    let o = morin(&["check", bad.to_str().unwrap()]);
    assert_eq!(o.code, 1);
    assert!(o.stdout.is_empty() && o.stderr.starts_with("error:"));
    let o = morin(&["check", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.code, 1);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(morin(&[]).code, 1);
    assert_eq!(morin(&["frob"]).code, 1);
    assert_eq!(
        morin(&["strata", &scene("torus_v"), "--depth", "3"]).code,
        1
    );
    assert_eq!(morin(&["strata", &scene("torus_v"), "--tol", "-1"]).code, 1);
    assert_eq!(morin(&["zeros", &scene("torus_v"), "--a", "0,0"]).code, 1);
    assert_eq!(morin(&["zeros", &scene("torus_v"), "--a", "1,2,3"]).code, 1);
    assert_eq!(morin(&["--help"]).code, 0);
}

#[test]
fn zeros_stratum_beyond_n_is_usage_error() {
    let o = morin(&["zeros", &scene("torus_v"), "--stratum", "3"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("stratum 3"));
}

#[test]
fn sphere_w_zeros_of_first_form() {
    let o = morin(&["zeros", &scene("sphere_w"), "--a", "1,0", "--no-timings"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let zeros = json(&o)["results"]["zeros"].as_array().unwrap().clone();
    assert_eq!(zeros.len(), 2);
    assert!(zeros.iter().all(|z| z["nondegenerate"] == "yes"));
}

#[test]
fn torus_restricted_zeros_are_even_and_contain_a2() {
    let o = morin(&[
        "zeros",
        &scene("torus_v"),
        "--stratum",
        "1",
        "--seed",
        "7",
        "--no-timings",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let r = json(&o);
    let zeros = r["results"]["zeros"].as_array().unwrap();
    assert_eq!(zeros.len() % 2, 0);
    assert_eq!(zeros.iter().filter(|z| z["type"] == "A2").count(), 4);
}

#[test]
fn negative_covector_components_parse() {
    let o = morin(&[
        "zeros",
        &scene("ex7"),
        "--stratum",
        "1",
        "--a=-0.6,0.8",
        "--no-timings",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(json(&o)["options"]["a"][0], -0.6);
}

#[test]
fn euler_on_noncompact_scene_exits_3() {
    let o = morin(&["euler", &scene("ex7"), "--no-timings"]);
    assert_eq!(o.code, 3);
    let r = json(&o);
    assert_eq!(r["results"]["compactness"]["passed"], false);
    assert!(o.stderr.contains("precondition"));
}

#[test]
fn tolerance_override_precedence() {
    let r = json(&morin(&[
        "strata",
        &scene("constant"),
        "--depth",
        "1",
        "--no-timings",
    ]));
    let base = r["options"]["tol_rank"].as_f64().unwrap();
    let res = r["options"]["tol_residual"].as_f64().unwrap();
    let r = json(&morin(&[
        "strata",
        &scene("constant"),
        "--depth",
        "1",
        "--tol",
        "10",
        "--tol-rank",
        "1e-6",
        "--no-timings",
    ]));
    assert_eq!(r["options"]["tol_rank"].as_f64().unwrap(), 1e-6);
    assert!((r["options"]["tol_residual"].as_f64().unwrap() / res - 10.0).abs() < 1e-12);
    assert_ne!(base, 1e-6);
}

#[test]
fn out_and_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let csv = dir.path().join("csv");
    let o = morin(&[
        "strata",
        &scene("ex7"),
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--no-timings",
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["command"], "strata");
    let sigma2 = std::fs::read_to_string(csv.join("sigma2.csv")).unwrap();
    let mut lines = sigma2.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3,depth,type"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|l| l.ends_with(",2,A2")));
    assert!(csv.join("sigma1.csv").exists());
}

#[test]
fn oracle_matches_solver_on_torus_a2() {
    let o = morin(&["oracle", &scene("torus_v"), "--depth", "2", "--no-timings"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let r = json(&o);
    assert_eq!(r["results"]["clusters"].as_array().unwrap().len(), 4);
    assert_eq!(r["results"]["comparison"]["bijection"], true);
}

#[test]
fn oracle_on_curve_has_no_comparison() {
    let o = morin(&[
        "oracle",
        &scene("sphere_w"),
        "--depth",
        "1",
        "--grid",
        "16",
        "--no-timings",
    ]);
    assert!(o.code == 0 || o.code == 3, "{}", o.stderr);
    assert!(json(&o)["results"]["comparison"].is_null());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_morin");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(
        code(&["check", &scene("sphere_v"), "--no-timings"]),
        Some(2)
    );
    assert_eq!(code(&["euler", &scene("ex7")]), Some(3));
    assert_eq!(code(&["check", "/nonexistent.toml"]), Some(1));
}
