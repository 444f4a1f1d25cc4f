use super::{System, Workspace};
use crate::linalg::{min_norm_solve, norm, Mat};

/// Singular values below this fraction of the largest are ignored when
/// computing Gauss–Newton steps.
const STEP_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GnResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gauss–Newton with minimum-norm steps and backtracking.
///
/// Works for square, over- and underdetermined systems: in the last case
/// the iteration converges to a nearby point of the solution set. Iteration
/// continues past `tol_residual` until the step stalls, so converged points
/// are polished to rounding level.
pub fn gauss_newton(
    sys: &System,
    x0: &[f64],
    tol_residual: f64,
    max_iter: usize,
    ws: &mut Workspace,
) -> GnResult {
    let mut x = x0.to_vec();
    let mut f = Vec::new();
    let mut jac = Mat::zeros(0, 0);
    if !sys.eval(&x, ws, &mut f, &mut jac) {
        return GnResult {
            x,
            residual: f64::INFINITY,
            iterations: 0,
            converged: false,
        };
    }
    let mut r = norm(&f);
    let mut iterations = 0;
    while iterations < max_iter && r > 0.0 {
        iterations += 1;
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = min_norm_solve(&jac, &neg, STEP_RCOND);
        let step_norm = norm(&step);
        if !step_norm.is_finite() || step_norm == 0.0 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let mut tf = Vec::new();
            let mut tj = Mat::zeros(0, 0);
            if sys.eval(&trial, ws, &mut tf, &mut tj) {
                let tr = norm(&tf);
                if tr < r {
                    accepted = Some((trial, tf, tj, tr));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((nx, nf, nj, nr)) = accepted else {
            break;
        };
        let moved = t * step_norm;
        x = nx;
        f = nf;
        jac = nj;
        r = nr;
        if moved <= 1e-13 * (1.0 + norm(&x)) {
            break;
        }
    }
    GnResult {
        converged: r <= tol_residual,
        x,
        residual: r,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn sys(eqs: &[&str], vars: &[&str]) -> System {
        let v: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        System::new(
            eqs.iter().map(|e| parse_expr(e, &v).unwrap()).collect(),
            v.len(),
        )
    }

    #[test]
    fn square_system_converges_quadratically() {
        let s = sys(&["x^2 + y^2 - 1", "x - y"], &["x", "y"]);
        let r = gauss_newton(&s, &[1.0, 0.2], 1e-12, 50, &mut Workspace::default());
        assert!(r.converged);
        let h = 0.5f64.sqrt();
        assert!((r.x[0] - h).abs() < 1e-14 && (r.x[1] - h).abs() < 1e-14);
        assert!(r.iterations < 12);
    }

    #[test]
    fn underdetermined_system_projects_onto_curve() {
        let s = sys(&["x^2 + y^2 - 1"], &["x", "y"]);
        let r = gauss_newton(&s, &[2.0, 0.0], 1e-12, 50, &mut Workspace::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-12 && r.x[1].abs() < 1e-12);
    }

    #[test]
    fn inconsistent_system_does_not_converge() {
        let s = sys(&["x", "x - 1"], &["x"]);
        let r = gauss_newton(&s, &[3.0], 1e-10, 50, &mut Workspace::default());
        assert!(!r.converged);
        assert!((r.x[0] - 0.5).abs() < 1e-12);
    }
}
