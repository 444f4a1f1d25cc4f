//! Acceptance criteria, one PASS/FAIL line each.

// `ensure!` negates float comparisons on purpose so that NaN fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use morin_core::analysis::{
    draw_covector, find_restricted_zeros, find_xi_zeros, Analysis, MorinType, Verdict, ZeroSet,
    GAP_MIN,
};
use morin_core::expr::{gradient, symbolic_determinant, Expr};
use morin_core::model::{global_equations, Scene};
use morin_core::solver::{grid_oracle, Workspace};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

const COORD_TOL: f64 = 1e-6;
const FAR_FROM_SIGMA2: f64 = 1e-3;
const MATCH_RADIUS: f64 = 1e-3;
const ORACLE_GRID: usize = 128;
const DRAWS: usize = 20;
const DRAW_SEED: u64 = 2024;
const FD_SAMPLES: usize = 100;
const FD_REL: f64 = 1e-5;
const DET_REL: f64 = 1e-10;

fn scene_path(name: &str) -> String {
    format!("{}/../../scenes/{name}.toml", env!("CARGO_MANIFEST_DIR"))
}

fn scene(name: &str) -> Scene {
    Scene::load(scene_path(name)).expect("scene loads")
}

fn cli(args: &[&str]) -> (i32, Value) {
    let out = morin_cli::run(std::iter::once("morin").chain(args.iter().copied()));
    let json = serde_json::from_str(&out.stdout).unwrap_or(Value::Null);
    (out.code, json)
}

fn coords(v: &Value) -> Vec<f64> {
    v.as_array()
        .expect("array")
        .iter()
        .map(|c| c.as_f64().expect("number"))
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn max_coord_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Every expected point is matched by exactly one found point and vice versa.
fn same_points(found: &[Vec<f64>], expected: &[[f64; 3]], tol: f64) -> Result<f64, String> {
    ensure!(
        found.len() == expected.len(),
        "found {} points, expected {}: {found:?}",
        found.len(),
        expected.len()
    );
    let mut worst: f64 = 0.0;
    for e in expected {
        let hits: Vec<&Vec<f64>> = found
            .iter()
            .filter(|f| max_coord_err(f, e) <= tol)
            .collect();
        ensure!(
            hits.len() == 1,
            "{e:?} matched {} times in {found:?}",
            hits.len()
        );
        worst = worst.max(max_coord_err(hits[0], e));
    }
    Ok(worst)
}

fn stratum_points(report: &Value, depth: usize) -> Vec<&Value> {
    report["results"]["strata"]
        .as_array()
        .expect("strata")
        .iter()
        .find(|s| s["depth"] == depth)
        .map(|s| s["points"].as_array().expect("points").iter().collect())
        .unwrap_or_default()
}

fn c1_ex7_golden() -> Check {
    let (code, r) = cli(&["strata", &scene_path("ex7"), "--depth", "2", "--no-timings"]);
    ensure!(code == 0, "strata exit {code}");
    let pts = stratum_points(&r, 2);
    let xs: Vec<Vec<f64>> = pts.iter().map(|p| coords(&p["x"])).collect();
    let err = same_points(&xs, &[[1.0, 2.0, 0.0], [-1.0, -2.0, 0.0]], COORD_TOL)?;
    let mut gaps = Vec::new();
    for p in &pts {
        let x = coords(&p["x"]);
        ensure!(p["type"] == "A2", "type {} at {x:?}", p["type"]);
        let rank = p["rank"]["rank"].as_u64().unwrap_or(0);
        ensure!(
            rank == p["expected_rank"].as_u64().unwrap_or(u64::MAX),
            "rank {rank} not full at {x:?}"
        );
        let gap = p["rank"]["gap_ratio"].as_f64().unwrap_or(f64::INFINITY);
        ensure!(gap >= 1e4, "gap ratio {gap:.3e} < 1e4 at {x:?}");
        let det = p["det"].as_f64().ok_or("no determinant")?;
        // det[∇f; ∇(2x1 − x2); ∇δ2] with δ2 = 2x3, computed independently.
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                2.0 * x[0] - x[1],
                -x[0],
                2.0 * x[2],
                2.0,
                -1.0,
                0.0,
                0.0,
                0.0,
                2.0,
            ],
        );
        let reference = m.determinant();
        ensure!(
            ((reference.abs()) - 4.0).abs() < 1e-5,
            "reference determinant {reference} is not ±4"
        );
        ensure!(
            det.abs() > 1e-8,
            "chart determinant {det} vanishes at {x:?}"
        );
        gaps.push(format!("{gap:.1e}"));
    }
    Ok(format!(
        "A2 = {{(1,2,0), (-1,-2,0)}}, max error {err:.1e}, rank full, gap ratios {}, |4x1| = 4",
        gaps.join(", ")
    ))
}

fn c2_torus_golden() -> Check {
    let (code, r) = cli(&[
        "strata",
        &scene_path("torus_v"),
        "--depth",
        "2",
        "--no-timings",
    ]);
    ensure!(code == 0, "strata exit {code}");
    let s1 = &r["results"]["strata"][0];
    let curves = s1["curves"].as_array().ok_or("no curves")?;
    ensure!(curves.len() == 2, "{} Σ¹ components", curves.len());
    ensure!(
        curves.iter().all(|c| c["closed"] == true),
        "open Σ¹ component"
    );
    let xs: Vec<Vec<f64>> = stratum_points(&r, 2)
        .iter()
        .map(|p| coords(&p["x"]))
        .collect();
    let err = same_points(
        &xs,
        &[
            [-3.0, 3.0, 0.0],
            [3.0, -3.0, 0.0],
            [-1.0, 1.0, 0.0],
            [1.0, -1.0, 0.0],
        ],
        COORD_TOL,
    )?;
    let (code, r) = cli(&["check", &scene_path("torus_v"), "--no-timings"]);
    ensure!(code == 0, "check exit {code}: {}", r["status"]["message"]);
    Ok(format!(
        "2 closed Σ¹ curves, 4 A2 points (max error {err:.1e}), check exit 0"
    ))
}

fn c3_torus_euler() -> Check {
    let (code, r) = cli(&[
        "euler",
        &scene_path("torus_v"),
        "--seed",
        "42",
        "--no-timings",
    ]);
    ensure!(code == 0, "euler exit {code}: {}", r["status"]["message"]);
    let res = &r["results"];
    ensure!(res["chi_m_mod2"] == 0, "χ(T) mod 2 = {}", res["chi_m_mod2"]);
    ensure!(
        res["rows"][1]["parity"] == 0,
        "#Z(ξ|Σ¹) mod 2 = {}",
        res["rows"][1]["parity"]
    );
    ensure!(res["a_n_count"] == 4, "#A2 = {}", res["a_n_count"]);
    ensure!(res["congruence_holds"] == true, "congruence fails");
    ensure!(
        res["independent"]["manifold"] == 0,
        "Morse χ(T) = {}",
        res["independent"]["manifold"]
    );
    ensure!(
        res["independent"]["closures"][0] == 0,
        "χ(Σ¹) = {}",
        res["independent"]["closures"][0]
    );
    Ok(format!(
        "#Z(ξ) = {}, #Z(ξ|Σ¹) = {}, #A2 = 4, congruence holds, Morse χ = 0, χ(Σ¹) = 0",
        res["rows"][0]["zeros"], res["rows"][1]["zeros"]
    ))
}

fn c4_sphere_controls() -> Check {
    let (code, r) = cli(&["check", &scene_path("sphere_v"), "--no-timings"]);
    ensure!(code == 2, "sphere V check exit {code}");
    let witnesses = r["results"]["morin"]["witnesses"]
        .as_array()
        .ok_or("no witnesses")?;
    ensure!(
        witnesses.iter().any(|w| w["condition"] == "ii"
            && w["message"]
                .as_str()
                .is_some_and(|m| m.contains("∇δ_2 ≈ 0"))),
        "no condition (ii) witness naming ∇δ_2"
    );
    let (code, r) = cli(&["check", &scene_path("sphere_w"), "--no-timings"]);
    ensure!(code == 0, "sphere W check exit {code}");
    let (_, s) = cli(&["strata", &scene_path("sphere_w"), "--no-timings"]);
    ensure!(stratum_points(&s, 2).is_empty(), "A2 not empty for W");
    let (code, e) = cli(&["euler", &scene_path("sphere_w"), "--no-timings"]);
    ensure!(code == 0, "sphere W euler exit {code}");
    ensure!(
        e["results"]["congruence_holds"] == true && e["results"]["chi_m_mod2"] == 0,
        "congruence"
    );
    ensure!(
        e["results"]["independent"]["manifold"] == 2,
        "Morse χ(S²) = {}",
        e["results"]["independent"]["manifold"]
    );
    Ok(format!(
        "V: exit 2 with ∇δ_2 witness; W: {}, A2 = ∅, 2 ≡ 0 mod 2, Morse χ = 2",
        r["status"]["message"]
    ))
}

struct DrawSets {
    a: Vec<f64>,
    xi: ZeroSet,
    restricted: ZeroSet,
}

fn draw_sets(an: &Analysis) -> Vec<DrawSets> {
    (0..DRAWS)
        .map(|i| {
            let a = draw_covector(2, DRAW_SEED, i).a;
            DrawSets {
                xi: find_xi_zeros(an, &a).expect("zeros"),
                restricted: find_restricted_zeros(an, 1, &a).expect("restricted zeros"),
                a,
            }
        })
        .collect()
}

fn analysed(name: &str) -> Analysis {
    let s = scene(name);
    let mut an = Analysis::new(&s).expect("analysis");
    an.compute_strata(2).expect("strata");
    an
}

fn c5_location_properties() -> Check {
    let mut lines = Vec::new();
    for name in ["torus_v", "ex7"] {
        let an = analysed(name);
        let tol = an.options().tol_residual;
        let a2: Vec<Vec<f64>> = an
            .stratum(2)
            .expect("Σ²")
            .points
            .iter()
            .map(|p| p.x.clone())
            .collect();
        ensure!(an.stratum(3).is_none(), "{name}: Σ³ exists for n = 2");
        let sets = draw_sets(&an);
        let mut ws = Workspace::default();
        let (mut parity_xi, mut parity_r) = (None, None);
        for d in &sets {
            for z in &d.xi.zeros {
                let chart = an
                    .atlas()
                    .chart_at(&z.x, 1)
                    .map_err(|e| format!("{name}: no Σ¹ chart at {:?}: {e}", z.x))?;
                let res = chart.system.residual_norm(&z.x, &mut ws);
                ensure!(
                    res <= 10.0 * tol,
                    "{name}: Σ¹ residual {res:.2e} at zero {:?} (a = {:?})",
                    z.x,
                    d.a
                );
                let near = a2
                    .iter()
                    .map(|p| dist(p, &z.x))
                    .fold(f64::INFINITY, f64::min);
                ensure!(
                    near > FAR_FROM_SIGMA2,
                    "{name}: zero {:?} within {near:.2e} of Σ²",
                    z.x
                );
            }
            let off3 = d
                .restricted
                .checks
                .get("zeros_off_sigma3")
                .ok_or("no Σ³ exclusion check")?;
            ensure!(off3.holds == Verdict::Yes, "{name}: {}", off3.detail);
            for p in &a2 {
                ensure!(
                    d.restricted
                        .zeros
                        .iter()
                        .any(|z| dist(&z.x, p) <= COORD_TOL),
                    "{name}: A2 point {p:?} not a zero of ξ|Σ¹ for a = {:?}",
                    d.a
                );
            }
            let (px, pr) = (d.xi.len() % 2, d.restricted.len() % 2);
            ensure!(
                *parity_xi.get_or_insert(px) == px,
                "{name}: #Z(ξ) parity changes at a = {:?}",
                d.a
            );
            ensure!(
                *parity_r.get_or_insert(pr) == pr,
                "{name}: #Z(ξ|Σ¹) parity changes at a = {:?}",
                d.a
            );
        }
        let counts: Vec<String> = sets
            .iter()
            .map(|d| format!("{}/{}", d.xi.len(), d.restricted.len()))
            .collect();
        lines.push(format!("{name} counts {}", counts.join(" ")));
    }
    Ok(lines.join("; "))
}

fn c6_nondegeneracy() -> Check {
    let mut lines = Vec::new();
    for name in ["torus_v", "ex7"] {
        let an = analysed(name);
        let sets = draw_sets(&an);
        let mut a1 = 0;
        for d in &sets {
            for z in d.xi.zeros.iter().chain(&d.restricted.zeros) {
                ensure!(
                    z.nondegenerate == Verdict::Yes,
                    "{name}: zero {:?} at depth {} is {:?}",
                    z.x,
                    z.depth,
                    z.nondegenerate
                );
            }
            for z in d.xi.zeros.iter().filter(|z| z.kind == MorinType::A(1)) {
                let r = d
                    .restricted
                    .zeros
                    .iter()
                    .find(|r| dist(&r.x, &z.x) <= COORD_TOL)
                    .ok_or_else(|| format!("{name}: A1 zero {:?} of ξ missing from ξ|Σ¹", z.x))?;
                let above = |b: &morin_core::analysis::BorderedCheck| {
                    b.gap_ratio >= GAP_MIN && b.det.abs() > 0.0
                };
                ensure!(
                    above(&z.bordered) == above(&r.bordered),
                    "{name}: bordered checks disagree at {:?}",
                    z.x
                );
                ensure!(
                    above(&z.bordered),
                    "{name}: bordered determinant at {:?} below tolerance",
                    z.x
                );
                a1 += 1;
            }
        }
        lines.push(format!(
            "{name}: {a1} A1 zeros, both bordered determinants nonzero"
        ));
    }
    Ok(lines.join("; "))
}

fn oracle_matches(found: &[Vec<f64>], clusters: &[Vec<f64>]) -> bool {
    found.len() == clusters.len()
        && found.iter().all(|f| {
            clusters
                .iter()
                .filter(|c| dist(c, f) <= MATCH_RADIUS)
                .count()
                == 1
        })
        && clusters
            .iter()
            .all(|c| found.iter().filter(|f| dist(c, f) <= MATCH_RADIUS).count() == 1)
}

fn c7_oracle() -> Check {
    let mut lines = Vec::new();
    for name in ["torus_v", "ex7"] {
        let an = analysed(name);
        let mut opts = an.options().clone();
        opts.grid = ORACLE_GRID;
        let a2: Vec<Vec<f64>> = an
            .stratum(2)
            .expect("Σ²")
            .points
            .iter()
            .map(|p| p.x.clone())
            .collect();
        let o = grid_oracle(
            &an.atlas()
                .global_system(2)
                .map_err(|e| e.to_string())?
                .clone(),
            &opts,
        );
        ensure!(
            !o.truncated && o.base_grid == ORACLE_GRID,
            "{name}: oracle truncated or grid reduced"
        );
        let reps: Vec<Vec<f64>> = o
            .clusters
            .iter()
            .map(|c| c.representative.clone())
            .collect();
        ensure!(
            oracle_matches(&a2, &reps),
            "{name}: A2 {a2:?} vs oracle {reps:?}"
        );
        let a = draw_covector(2, DRAW_SEED, 0).a;
        let mut zero_counts = Vec::new();
        for depth in [0, 1] {
            let set = find_restricted_zeros(&an, depth, &a).map_err(|e| e.to_string())?;
            let found: Vec<Vec<f64>> = set.zeros.iter().map(|z| z.x.clone()).collect();
            let sys = an
                .atlas()
                .global_zero_system(depth, &a)
                .map_err(|e| e.to_string())?;
            let o = grid_oracle(&sys, &opts);
            ensure!(
                !o.truncated,
                "{name}: zero oracle truncated at depth {depth}"
            );
            let reps: Vec<Vec<f64>> = o
                .clusters
                .iter()
                .map(|c| c.representative.clone())
                .collect();
            ensure!(
                oracle_matches(&found, &reps),
                "{name}: depth {depth} zeros {found:?} vs oracle {reps:?}"
            );
            zero_counts.push(found.len());
        }
        lines.push(format!(
            "{name}: {} A2, {}+{} zeros matched",
            a2.len(),
            zero_counts[0],
            zero_counts[1]
        ));
    }
    Ok(lines.join("; "))
}

fn random_point(rng: &mut ChaCha8Rng, s: &Scene) -> Vec<f64> {
    (0..s.dim())
        .map(|i| rng.random_range(s.region.lo[i]..s.region.hi[i]))
        .collect()
}

fn c8_hygiene() -> Check {
    let names = [
        "ex7",
        "torus_v",
        "torus_w",
        "sphere_v",
        "sphere_w",
        "constant",
        "swallowtail",
    ];
    let mut worst_fd: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    let mut compared = 0usize;
    for name in names {
        let s = scene(name);
        let dim = s.dim();
        let mut exprs: Vec<Expr> = s.constraints.clone();
        exprs.extend(s.rank_rows().iter().flatten().cloned());
        exprs.extend(global_equations(&s, 1).map_err(|e| e.to_string())?);
        let grads: Vec<Vec<Expr>> = exprs.iter().map(|e| gradient(e, dim)).collect();
        let rows = s.rank_rows();
        let square: Vec<Vec<Expr>> = rows.iter().map(|r| r[..rows.len()].to_vec()).collect();
        let det = (rows.len() <= dim).then(|| symbolic_determinant(&square).expect("determinant"));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..FD_SAMPLES {
            let x = random_point(&mut rng, &s);
            for (e, g) in exprs.iter().zip(&grads) {
                for (i, gi) in g.iter().enumerate() {
                    let Ok(sym) = gi.eval(&x) else { continue };
                    let h = 1e-5 * x[i].abs().max(1.0);
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[i] += h;
                    xm[i] -= h;
                    let (Ok(fp), Ok(fm)) = (e.eval(&xp), e.eval(&xm)) else {
                        continue;
                    };
                    if !(sym.is_finite() && fp.is_finite() && fm.is_finite()) {
                        continue;
                    }
                    let fd = (fp - fm) / (2.0 * h);
                    let rel = (sym - fd).abs() / sym.abs().max(1.0);
                    worst_fd = worst_fd.max(rel);
                    compared += 1;
                    ensure!(
                        rel <= FD_REL,
                        "{name}: ∂{i} at {x:?}: symbolic {sym} vs difference {fd}"
                    );
                }
            }
            if let Some(det) = &det {
                let vals: Result<Vec<f64>, _> =
                    square.iter().flatten().map(|e| e.eval(&x)).collect();
                let (Ok(vals), Ok(sym)) = (vals, det.eval(&x)) else {
                    continue;
                };
                let k = square.len();
                let m = DMatrix::from_row_slice(k, k, &vals);
                let scale: f64 = m
                    .row_iter()
                    .map(|r| r.norm())
                    .product::<f64>()
                    .max(f64::MIN_POSITIVE);
                let rel = (sym - m.determinant()).abs() / scale;
                worst_det = worst_det.max(rel);
                ensure!(
                    rel <= DET_REL,
                    "{name}: determinant at {x:?}: symbolic {sym} vs numeric {}",
                    m.determinant()
                );
            }
        }
    }
    Ok(format!("{compared} derivatives, worst relative error {worst_fd:.1e}; worst determinant error {worst_det:.1e} (Hadamard-relative)"))
}

fn c9_determinism() -> Check {
    let bin = env!("CARGO_BIN_EXE_morin");
    let path = scene_path("torus_v");
    let run = || {
        Command::new(bin)
            .args(["euler", &path, "--seed", "42", "--no-timings"])
            .output()
            .map_err(|e| e.to_string())
    };
    let (a, b) = (run()?, run()?);
    ensure!(a.status.code() == Some(0), "exit {:?}", a.status.code());
    ensure!(a.stdout == b.stdout, "outputs differ");
    Ok(format!("two runs, {} identical bytes", a.stdout.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("ex7 golden strata", c1_ex7_golden),
        ("torus golden strata and check", c2_torus_golden),
        ("torus Euler congruence", c3_torus_euler),
        ("sphere negative control and Euler", c4_sphere_controls),
        ("zero location properties, 20 draws", c5_location_properties),
        ("nondegeneracy properties, 20 draws", c6_nondegeneracy),
        ("grid oracle equivalence", c7_oracle),
        ("numerical hygiene", c8_hygiene),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {} {name} ({secs:.1}s): {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1}s): {msg}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
