use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use super::seeds::grid_seeds;
use super::{dedup_points, distance, gauss_newton, SolveOptions, System, Workspace};
use crate::linalg::{dot, svd};

const CORRECTOR_ITERS: usize = 12;
const MAX_HALVINGS: u32 = 12;
const MAX_STEPS: usize = 200_000;

/// One connected piece of a 1-dimensional solution set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveComponent {
    pub points: Vec<Vec<f64>>,
    /// The polyline returned to its start; the last vertex repeats the first.
    pub closed: bool,
    /// False when step control collapsed before closing or leaving the box.
    pub complete: bool,
    pub arc_length: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraceOutcome {
    pub components: Vec<CurveComponent>,
    pub seeds: usize,
    pub on_curve_seeds: usize,
}

enum End {
    Closed,
    Exit,
    Collapse,
}

/// Unit tangent at `x`: the right singular vector of the smallest singular
/// value of the Jacobian.
fn tangent(sys: &System, x: &[f64], ws: &mut Workspace) -> Option<Vec<f64>> {
    let jac = sys.jacobian(x, ws)?;
    let d = svd(&jac);
    let n = sys.dim();
    Some(d.v.col(n - 1))
}

/// Sign convention making a tangent direction deterministic.
fn orient(mut t: Vec<f64>) -> Vec<f64> {
    if let Some(v) = t.iter().find(|v| v.abs() > 1e-12) {
        if *v < 0.0 {
            t.iter_mut().for_each(|c| *c = -*c);
        }
    }
    t
}

fn march(
    sys: &System,
    start: &[f64],
    t0: &[f64],
    opts: &SolveOptions,
    ws: &mut Workspace,
) -> (Vec<Vec<f64>>, End) {
    let h0 = opts.trace_step;
    let mut pts = vec![start.to_vec()];
    let mut x = start.to_vec();
    let mut t = t0.to_vec();
    let mut h = h0;
    let mut arc = 0.0;
    let mut halvings = 0;
    while pts.len() < MAX_STEPS {
        let y: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + h * b).collect();
        let r = gauss_newton(sys, &y, opts.tol_residual, CORRECTOR_ITERS, ws);
        let step = distance(&r.x, &x);
        let next_t = if r.converged {
            tangent(sys, &r.x, ws)
        } else {
            None
        };
        let good = match &next_t {
            Some(nt) => step <= 1.5 * h && step >= 0.25 * h && dot(nt, &t).abs() >= 0.7,
            None => false,
        };
        if !good {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return (pts, End::Collapse);
            }
            h *= 0.5;
            continue;
        }
        let mut nt = next_t.unwrap_or_default();
        if dot(&nt, &t) < 0.0 {
            nt.iter_mut().for_each(|c| *c = -*c);
        }
        if !opts.region.contains(&r.x, 0.0) {
            return (pts, End::Exit);
        }
        arc += step;
        let back = distance(&r.x, start);
        pts.push(r.x.clone());
        if arc >= 3.0 * h0 && back <= 1.5 * h0 && dot(&nt, t0) > 0.0 {
            pts.push(start.to_vec());
            return (pts, End::Closed);
        }
        x = r.x;
        t = nt;
        halvings = 0;
        h = (2.0 * h).min(h0);
    }
    (pts, End::Collapse)
}

fn arc_length(pts: &[Vec<f64>]) -> f64 {
    pts.windows(2).map(|w| distance(&w[0], &w[1])).sum()
}

/// Traces the component through `start` (a point on the curve) in both
/// directions.
pub fn trace_from(sys: &System, start: &[f64], opts: &SolveOptions) -> CurveComponent {
    let mut ws = Workspace::default();
    let Some(t0) = tangent(sys, start, &mut ws).map(orient) else {
        return CurveComponent {
            points: vec![start.to_vec()],
            closed: false,
            complete: false,
            arc_length: 0.0,
        };
    };
    let (fwd, end) = march(sys, start, &t0, opts, &mut ws);
    if let End::Closed = end {
        return CurveComponent {
            arc_length: arc_length(&fwd),
            points: fwd,
            closed: true,
            complete: true,
        };
    }
    let back_t: Vec<f64> = t0.iter().map(|v| -v).collect();
    let (bwd, end2) = march(sys, start, &back_t, opts, &mut ws);
    let mut points: Vec<Vec<f64>> = bwd.into_iter().rev().collect();
    points.extend(fwd.into_iter().skip(1));
    let complete = matches!(end, End::Exit) && matches!(end2, End::Exit);
    CurveComponent {
        arc_length: arc_length(&points),
        points,
        closed: false,
        complete,
    }
}

/// Finds all components of a curve defined by `sys` (expected solution
/// dimension 1) that meet the seeding grid.
pub fn trace_curves(sys: &System, opts: &SolveOptions) -> TraceOutcome {
    let seeds = grid_seeds(sys, opts);
    let projected: Vec<Vec<f64>> = seeds
        .par_iter()
        .map_init(Workspace::default, |ws, s| {
            let r = gauss_newton(sys, s, opts.tol_residual, opts.newton_max_iter, ws);
            (r.converged && opts.region.contains(&r.x, 0.0)).then_some(r.x)
        })
        .flatten()
        .collect();
    let h0 = opts.trace_step;
    let on_curve = dedup_points(projected, 0.25 * h0, |p| p.as_slice(), |_| 0.0);
    let mut covered: HashMap<Vec<i64>, Vec<Vec<f64>>> = HashMap::new();
    let key = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / h0).floor() as i64).collect() };
    let near = |covered: &HashMap<Vec<i64>, Vec<Vec<f64>>>, p: &[f64]| -> bool {
        let k = key(p);
        let dim = k.len();
        (0..3usize.pow(dim as u32)).any(|code| {
            let mut c = code;
            let nb: Vec<i64> = k
                .iter()
                .map(|&v| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    v + o
                })
                .collect();
            covered
                .get(&nb)
                .is_some_and(|l| l.iter().any(|q| distance(q, p) <= h0))
        })
    };
    let mut components = Vec::new();
    for p in &on_curve {
        if near(&covered, p) {
            continue;
        }
        let comp = trace_from(sys, p, opts);
        for w in comp.points.windows(2) {
            // Index segment midpoints too, so seeds between vertices count as
            // covered.
            let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            covered.entry(key(&mid)).or_default().push(mid);
        }
        for q in &comp.points {
            covered.entry(key(q)).or_default().push(q.clone());
        }
        components.push(comp);
    }
    TraceOutcome {
        components,
        seeds: seeds.len(),
        on_curve_seeds: on_curve.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::solver::BoxRegion;

    fn sys(eqs: &[&str]) -> System {
        let v: Vec<String> = vec!["x".into(), "y".into(), "z".into()];
        System::new(eqs.iter().map(|e| parse_expr(e, &v).unwrap()).collect(), 3)
    }

    #[test]
    fn two_circles_are_two_closed_components() {
        // Circles of radius 1 and 2 in the plane z = 0.
        let s = sys(&["(x^2 + y^2 - 1)*(x^2 + y^2 - 4)", "z"]);
        let mut opts = SolveOptions::new(BoxRegion::cube(3, 3.0));
        opts.grid = 32;
        let out = trace_curves(&s, &opts);
        assert_eq!(
            out.components.len(),
            2,
            "{:?}",
            out.components
                .iter()
                .map(|c| c.points.len())
                .collect::<Vec<_>>()
        );
        let mut lengths: Vec<f64> = out.components.iter().map(|c| c.arc_length).collect();
        lengths.sort_by(f64::total_cmp);
        assert!(out.components.iter().all(|c| c.closed && c.complete));
        let tau = std::f64::consts::TAU;
        assert!((lengths[0] - tau).abs() < 0.05 * tau);
        assert!((lengths[1] - 2.0 * tau).abs() < 0.05 * tau);
        for c in &out.components {
            assert_eq!(c.points.first(), c.points.last());
            for w in c.points.windows(2) {
                assert!(distance(&w[0], &w[1]) <= 2.0 * opts.trace_step);
            }
        }
    }

    #[test]
    fn line_leaves_the_box() {
        let s = sys(&["x - y", "z"]);
        let mut opts = SolveOptions::new(BoxRegion::cube(3, 1.0));
        opts.grid = 16;
        let out = trace_curves(&s, &opts);
        assert_eq!(out.components.len(), 1);
        let c = &out.components[0];
        assert!(!c.closed && c.complete);
        assert!((c.arc_length - 8f64.sqrt()).abs() < 4.0 * opts.trace_step);
    }

    #[test]
    fn empty_curve() {
        let s = sys(&["x^2 + y^2 + 1", "z"]);
        let opts = SolveOptions::new(BoxRegion::cube(3, 1.0));
        assert!(trace_curves(&s, &opts).components.is_empty());
    }
}
