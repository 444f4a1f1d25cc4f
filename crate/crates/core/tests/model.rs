use morin_core::expr::{differentiate, parse_expr, simplify, Expr};
use morin_core::linalg::determinant;
use morin_core::model::{audit_hint, equation_count, global_equations, select_pivot, Atlas, Scene};
use morin_core::solver::Workspace;

fn scene(name: &str) -> Scene {
    Scene::load(format!(
        "{}/../../scenes/{name}.toml",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

/// Points of the torus Sigma^1: x1 + x2 = 0, sqrt(x2^2 + x3^2) in {1, 3}.
fn torus_sigma1(count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for r in [1.0, 3.0] {
        for i in 0..count {
            let t = 0.1 + std::f64::consts::TAU * i as f64 / count as f64;
            let (x2, x3) = (r * t.cos(), r * t.sin());
            out.push(vec![-x2, x2, x3]);
        }
    }
    out
}

fn eval(e: &Expr, x: &[f64]) -> f64 {
    e.eval(x).unwrap()
}

#[test]
fn ex7_pivot_and_delta2_zero_set() {
    let s = scene("ex7");
    let p = select_pivot(&s, &[1.0, 2.0, 0.0], 1e-8).unwrap();
    assert_eq!(
        (p.coords.clone(), p.coframe.clone(), p.free_row),
        (vec![0], vec![0], 1)
    );
    assert_eq!(p.minor_value_at_anchor, 1.0);

    let atlas = Atlas::new(&s).unwrap();
    let chart = atlas.chart_at(&[1.0, 2.0, 0.0], 2).unwrap();
    assert_eq!(chart.equations.len(), equation_count(&s, 2));
    let d = chart.delta().unwrap();
    // Sigma^1 is {x2 = 2 x1, x3^2 = x1^2 - 1}; walk the branch x1 >= 1.
    for i in 0..20 {
        let x1 = 1.0 + 0.05 * i as f64;
        let x3 = (x1 * x1 - 1.0).sqrt();
        for sign in [1.0, -1.0] {
            let x = [x1, 2.0 * x1, sign * x3];
            for e in &chart.equations[..equation_count(&s, 1)] {
                assert!(eval(e, &x).abs() < 1e-12);
            }
            let v = eval(d, &x);
            if i == 0 {
                assert!(v.abs() < 1e-12);
            } else {
                assert!(v.abs() > 1e-3);
                assert_eq!(v.signum(), eval(d, &[x1, 2.0 * x1, x3]).signum() * sign);
            }
        }
    }
}

#[test]
fn sphere_v_delta2_vanishes_on_sigma1() {
    let s = scene("sphere_v");
    let p = select_pivot(&s, &[0.0, 1.0, 0.0], 1e-8).unwrap();
    assert_eq!(p.minor_value_at_anchor, -2.0);
    assert_eq!(p.coords, vec![0]);
    let atlas = Atlas::new(&s).unwrap();
    for i in 0..24 {
        let t = 0.05 + i as f64 * std::f64::consts::TAU / 24.0;
        let x = [0.0, t.cos(), t.sin()];
        let chart = atlas.chart_at(&x, 2).unwrap();
        let d = chart.delta().unwrap();
        assert!(eval(d, &x).abs() < 1e-12);
        // The gradient of delta_2 lies in the conormal of Sigma^1, so the
        // depth-2 chart Jacobian is singular.
        let jac = chart
            .system
            .jacobian(&x, &mut Workspace::default())
            .unwrap();
        assert!(determinant(&jac).unwrap().abs() < 1e-12);
    }
}

#[test]
fn torus_pivot_is_the_largest_candidate() {
    let s = scene("torus_v");
    let v = &s.var_names;
    let f2 = parse_expr(
        "2*x2*(sqrt(x2^2 + x3^2) - 2)/sqrt(x2^2 + x3^2) + 2*(x1 + x2)",
        v,
    )
    .unwrap();
    let f3 = parse_expr("2*x3*(sqrt(x2^2 + x3^2) - 2)/sqrt(x2^2 + x3^2)", v).unwrap();
    for x in torus_sigma1(16) {
        // On Sigma^1 only the first column of the frame is nonzero.
        let cand = [-eval(&f2, &x), -eval(&f3, &x)];
        let best = if cand[1].abs() > cand[0].abs() { 1 } else { 0 };
        let p = select_pivot(&s, &x, 1e-8).unwrap();
        assert_eq!(p.coords, vec![0]);
        assert_eq!(p.coframe, vec![best]);
        assert!((p.minor_value_at_anchor - cand[best]).abs() < 1e-12);
    }
}

#[test]
fn constant_coframe_has_unit_pivot_and_empty_sigma1() {
    let s = scene("constant");
    let p = select_pivot(&s, &[0.3, -0.2], 1e-8).unwrap();
    assert_eq!(p.minor_value_at_anchor, 1.0);
    assert_eq!((p.coords.clone(), p.coframe.clone()), (vec![0], vec![0]));
    let atlas = Atlas::new(&s).unwrap();
    let chart = atlas.chart_at(&[0.3, -0.2], 1).unwrap();
    assert_eq!(chart.equations.len(), 1);
    assert_eq!(
        chart.equations[0].as_const().map(|c| c.to_string()),
        Some("1".to_string())
    );
}

#[test]
fn equation_counts_along_the_swallowtail_chain() {
    let s = scene("swallowtail");
    let atlas = Atlas::new(&s).unwrap();
    // A cusp point of the swallowtail: x = -6 z^2, y = 8 z^3.
    let z: f64 = 0.2;
    let cusp = [-6.0 * z * z, 8.0 * z * z * z, z];
    for k in 1..=2 {
        let chart = atlas.chart_at(&cusp, k).unwrap();
        assert_eq!(chart.equations.len(), equation_count(&s, k));
        assert_eq!(chart.equations.len(), k);
        for e in &chart.equations {
            assert!(eval(e, &cusp).abs() < 1e-12, "{k}");
        }
    }
    let origin = [0.0; 3];
    let top = atlas.chart_at(&origin, 3).unwrap();
    assert_eq!(top.equations.len(), 3);
    for e in &top.equations {
        assert!(eval(e, &origin).abs() < 1e-12);
    }
    assert!(eval(top.delta().unwrap(), &cusp).abs() > 1e-6);
}

#[test]
fn automatic_delta2_matches_the_closed_form_on_the_torus() {
    let s = scene("torus_v");
    let f = &s.constraints[0];
    let d = |e: &Expr, i: usize| simplify(&differentiate(e, i));
    let (f1, f2, f3) = (d(f, 0), d(f, 1), d(f, 2));
    // f2 f13 - f3 f12
    let closed = simplify(&morin_core::expr::build::sub(
        &morin_core::expr::build::mul(&f2, &d(&f1, 2)),
        &morin_core::expr::build::mul(&f3, &d(&f1, 1)),
    ));
    let atlas = Atlas::new(&s).unwrap();
    let samples = torus_sigma1(40);
    let audit = audit_hint(&atlas, 2, &closed, &samples, 7);
    assert!(audit.accepted, "{audit:?}");
    assert_eq!(audit.compared, 50);

    let hint = s
        .hints
        .get(&2)
        .cloned()
        .unwrap_or_else(|| scene("torus_v_hint").hints[&2].clone());
    assert!(audit_hint(&atlas, 2, &hint, &samples, 7).accepted);

    let wrong = parse_expr("x2", &s.var_names).unwrap();
    let bad = audit_hint(&atlas, 2, &wrong, &samples, 7);
    assert!(!bad.accepted);
    assert!(bad.reason.is_some());
}

#[test]
fn hinted_atlas_uses_the_hint() {
    let s = scene("torus_v_hint");
    let atlas = Atlas::with_hints(&s, s.hints.clone()).unwrap();
    let x = [-3.0, 3.0, 0.0];
    let chart = atlas.chart_at(&x, 2).unwrap();
    assert_eq!(chart.key.hinted, vec![2]);
    assert_eq!(chart.delta(), Some(&s.hints[&2]));
}

#[test]
fn charts_with_different_pivots_agree_on_sigma1() {
    let s = scene("torus_v");
    let atlas = Atlas::new(&s).unwrap();
    let a = atlas
        .chart_at(
            &[-3.0 * 0.3f64.cos(), 3.0 * 0.3f64.cos(), 3.0 * 0.3f64.sin()],
            1,
        )
        .unwrap();
    let b = atlas
        .chart_at(
            &[-3.0 * 1.3f64.cos(), 3.0 * 1.3f64.cos(), 3.0 * 1.3f64.sin()],
            1,
        )
        .unwrap();
    assert_ne!(a.key, b.key);
    let mut ws = Workspace::default();
    let mut both = 0;
    for x in torus_sigma1(64) {
        let (ma, mb) = (
            atlas.margins(&a, &x).unwrap(),
            atlas.margins(&b, &x).unwrap(),
        );
        if ma.min() < 0.1 || mb.min() < 0.1 {
            continue;
        }
        both += 1;
        assert!(a.system.residual_norm(&x, &mut ws) < 1e-12);
        assert!(b.system.residual_norm(&x, &mut ws) < 1e-12);
    }
    assert!(both > 4);
    // Off Sigma^1 on the torus neither chart vanishes.
    let off = [0.0, 3.0, 0.0f64];
    assert!(
        a.system
            .residual_norm(&[off[0] - 1.0, off[1], off[2]], &mut ws)
            > 1e-3
    );
}

#[test]
fn margins_are_one_at_the_anchor() {
    let s = scene("ex7");
    let atlas = Atlas::new(&s).unwrap();
    let x = [2.0, 4.0, 3f64.sqrt()];
    let chart = atlas.chart_at(&x, 2).unwrap();
    let m = atlas.margins(&chart, &x).unwrap();
    assert!((m.min() - 1.0).abs() < 1e-12, "{m:?}");
}

#[test]
fn global_equations_cut_out_the_strata() {
    let s = scene("ex7");
    let e1 = global_equations(&s, 1).unwrap();
    let e2 = global_equations(&s, 2).unwrap();
    assert!(e2.len() > e1.len());
    let on_sigma1 = [2.0, 4.0, 3f64.sqrt()];
    let regular = [0.0, 1.0 / 0.5, 0.0]; // x1 = 0 forces x3^2 = -1: not on M, but off Sigma^1 too
    for e in &e1 {
        assert!(eval(e, &on_sigma1).abs() < 1e-10);
    }
    assert!(e1[1..].iter().any(|e| eval(e, &regular).abs() > 1e-3));
    for e in &e2 {
        assert!(eval(e, &[1.0, 2.0, 0.0]).abs() < 1e-10);
        assert!(eval(e, &[-1.0, -2.0, 0.0]).abs() < 1e-10);
    }
    assert!(e2.iter().any(|e| eval(e, &on_sigma1).abs() > 1e-3));
}
