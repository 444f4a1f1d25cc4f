//! Numerical solution sets of equation systems: isolated points, traced
//! curves, and a subdivision oracle that does not use Newton iterations.

mod newton;
mod oracle;
mod seeds;
mod system;
mod trace;

use serde::{Deserialize, Serialize};

use crate::linalg::RankReport;

pub use newton::{gauss_newton, GnResult};
pub use oracle::{grid_oracle, OracleCluster, OracleOutcome};
pub use seeds::{dedup_points, grid_seeds, solve_from_seeds, solve_points, PointCloud, SolveStats};
pub use system::{System, Workspace};
pub use trace::{trace_curves, trace_from, CurveComponent, TraceOutcome};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> BoxRegion {
        assert_eq!(lo.len(), hi.len());
        BoxRegion { lo, hi }
    }

    /// The cube `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64) -> BoxRegion {
        BoxRegion::new(vec![-r; dim], vec![r; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn min_width(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.width(i))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.width(i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] - slack && v <= self.hi[i] + slack)
    }

    pub fn is_valid(&self) -> bool {
        self.dim() > 0
            && (0..self.dim()).all(|i| {
                self.lo[i].is_finite() && self.hi[i].is_finite() && self.lo[i] < self.hi[i]
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOptions {
    pub region: BoxRegion,
    pub tol_residual: f64,
    pub tol_rank: f64,
    /// Cells per axis for seeding.
    pub grid: usize,
    pub newton_max_iter: usize,
    /// Absolute merge radius.
    pub dedup_radius: f64,
    /// Arc-length step for curve tracing.
    pub trace_step: f64,
}

impl SolveOptions {
    pub const DEFAULT_GRID: usize = 64;
    pub const DEFAULT_MAX_ITER: usize = 50;
    /// Merge radius relative to the box diameter.
    pub const DEFAULT_DEDUP_REL: f64 = 1e-6;

    pub fn new(region: BoxRegion) -> SolveOptions {
        let grid = Self::DEFAULT_GRID;
        SolveOptions {
            dedup_radius: Self::DEFAULT_DEDUP_REL * region.diameter(),
            trace_step: region.min_width() / grid as f64,
            region,
            tol_residual: 1e-10,
            tol_rank: 1e-8,
            grid,
            newton_max_iter: Self::DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.region.is_valid() {
            return Err("box must have finite bounds with lo < hi on every axis".into());
        }
        for (name, v) in [
            ("tol_residual", self.tol_residual),
            ("tol_rank", self.tol_rank),
            ("dedup_radius", self.dedup_radius),
            ("trace_step", self.trace_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.grid < 8 {
            return Err("grid must be at least 8".into());
        }
        if self.newton_max_iter == 0 {
            return Err("newton_max_iter must be positive".into());
        }
        Ok(())
    }
}

/// A converged solution of a system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolvedPoint {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub jacobian_rank: RankReport,
    /// Index of the seed the iteration started from.
    pub converged_from: usize,
}

/// Lexicographic order on coordinates, total on finite values.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c.is_ne() {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
