use std::sync::Arc;

use crate::expr::{gradient, simplify, Expr, Tape};
use crate::linalg::Mat;

/// A compiled list of equations `f_i(x) = 0` over `dim` unknowns, with exact
/// Jacobians.
#[derive(Debug, Clone)]
pub struct System {
    dim: usize,
    equations: Vec<Expr>,
    gradients: Vec<Vec<Expr>>,
    /// Values followed by the row-major Jacobian.
    full: Arc<Tape>,
    /// One tape per equation: value then gradient. Used for early-exit
    /// cell tests.
    single: Vec<Arc<Tape>>,
}

/// Reusable per-thread buffers.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    scratch: Vec<f64>,
    out: Vec<f64>,
}

impl System {
    pub fn new(equations: Vec<Expr>, dim: usize) -> System {
        let gradients: Vec<Vec<Expr>> = equations
            .iter()
            .map(|e| gradient(e, dim).iter().map(simplify).collect())
            .collect();
        System::with_gradients(equations, gradients, dim)
    }

    /// Builds a system from precomputed gradients.
    pub fn with_gradients(equations: Vec<Expr>, gradients: Vec<Vec<Expr>>, dim: usize) -> System {
        assert_eq!(equations.len(), gradients.len());
        let mut all = equations.clone();
        for g in &gradients {
            assert_eq!(g.len(), dim, "gradient length must equal the dimension");
            all.extend(g.iter().cloned());
        }
        let full = Arc::new(Tape::new(&all));
        let single = equations
            .iter()
            .zip(&gradients)
            .map(|(e, g)| {
                let mut v = vec![e.clone()];
                v.extend(g.iter().cloned());
                Arc::new(Tape::new(&v))
            })
            .collect();
        System {
            dim,
            equations,
            gradients,
            full,
            single,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn equations(&self) -> &[Expr] {
        &self.equations
    }

    pub fn gradients(&self) -> &[Vec<Expr>] {
        &self.gradients
    }

    /// This system followed by `other`'s equations.
    pub fn concat(&self, other: &System) -> System {
        assert_eq!(self.dim, other.dim);
        let mut eqs = self.equations.clone();
        eqs.extend(other.equations.iter().cloned());
        let mut grads = self.gradients.clone();
        grads.extend(other.gradients.iter().cloned());
        System::with_gradients(eqs, grads, self.dim)
    }

    /// Values and Jacobian at `x`. Returns `false` on non-finite output.
    pub fn eval(&self, x: &[f64], ws: &mut Workspace, f: &mut Vec<f64>, jac: &mut Mat) -> bool {
        let q = self.len();
        ws.out.resize(q * (self.dim + 1), 0.0);
        let ok = self.full.eval_with(x, &mut ws.scratch, &mut ws.out);
        f.clear();
        f.extend_from_slice(&ws.out[..q]);
        *jac = Mat::from_row_slice(q, self.dim, &ws.out[q..]);
        ok
    }

    pub fn values(&self, x: &[f64], ws: &mut Workspace) -> Option<Vec<f64>> {
        let mut f = Vec::new();
        let mut jac = Mat::zeros(0, 0);
        self.eval(x, ws, &mut f, &mut jac).then_some(f)
    }

    pub fn jacobian(&self, x: &[f64], ws: &mut Workspace) -> Option<Mat> {
        let mut f = Vec::new();
        let mut jac = Mat::zeros(0, 0);
        self.eval(x, ws, &mut f, &mut jac).then_some(jac)
    }

    /// Euclidean norm of the equation values, `∞` where undefined.
    pub fn residual_norm(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        match self.values(x, ws) {
            Some(f) => crate::linalg::norm(&f),
            None => f64::INFINITY,
        }
    }

    /// Linearized exclusion test on an axis-aligned cell: passes when every
    /// equation can plausibly vanish inside, i.e.
    /// `|f(c)| ≤ κ·Σ|∂_j f(c)|·h_j + slack` at the center `c` with half
    /// widths `h`.
    pub fn cell_may_contain_zero(
        &self,
        center: &[f64],
        half: &[f64],
        kappa: f64,
        slack: f64,
        ws: &mut Workspace,
    ) -> bool {
        ws.out.resize(self.dim + 1, 0.0);
        for tape in &self.single {
            if !tape.eval_with(center, &mut ws.scratch, &mut ws.out) {
                // Undefined at the center: keep the cell, finer levels decide.
                continue;
            }
            let bound: f64 = ws.out[1..].iter().zip(half).map(|(g, h)| g.abs() * h).sum();
            if ws.out[0].abs() > kappa * bound + slack {
                return false;
            }
        }
        true
    }
}
