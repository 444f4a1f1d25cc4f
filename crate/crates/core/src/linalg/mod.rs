//! Small dense linear algebra with explicit rank tolerances.
//!
//! Matrices here are at most 64×64: Jacobians of chart systems, coframe
//! component matrices and bordered matrices. Robustness matters more than
//! speed, so rank decisions go through a one-sided Jacobi SVD.

mod qr;
mod svd;

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::Serialize;
use thiserror::Error;

pub use qr::{least_squares, LeastSquares};
pub use svd::{min_norm_solve, null_space, svd, Svd};

/// Largest supported dimension.
pub const MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        assert!(
            rows <= MAX_DIM && cols <= MAX_DIM,
            "matrix {rows}x{cols} exceeds {MAX_DIM}"
        );
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Mat {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        let mut m = Mat::zeros(rows, cols);
        m.data.copy_from_slice(data);
        m
    }

    /// Builds a matrix from equally long rows. An empty list gives a 0×0
    /// matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Mat {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Mat::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            m.row_mut(i).copy_from_slice(r);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Mat {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "incompatible shapes for product");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "incompatible shapes for product");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Rows `idx` stacked in order.
    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    pub fn select_cols(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// `self` stacked on top of `other`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        if self.rows == 0 {
            return other.clone();
        }
        if other.rows == 0 {
            return self.clone();
        }
        assert_eq!(self.cols, other.cols, "column counts differ");
        let mut m = Mat::zeros(self.rows + other.rows, self.cols);
        m.data[..self.data.len()].copy_from_slice(&self.data);
        m.data[self.data.len()..].copy_from_slice(&other.data);
        m
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Outcome of a numerical rank decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    /// Descending, `min(rows, cols)` entries.
    pub singular_values: Vec<f64>,
    /// Relative tolerance the decision used.
    pub tolerance_used: f64,
    /// `σ_rank / σ_{rank+1}`. When the rank is full, `σ_{rank+1}` is taken to
    /// be the threshold `tol·σ_max`, so the ratio still says how far the
    /// smallest kept value sits above the cut. Infinite only for the exact
    /// zero matrix.
    pub gap_ratio: f64,
}

impl RankReport {
    pub fn is_full(&self) -> bool {
        self.rank == self.singular_values.len()
    }

    /// True when the decision has at least `min_gap` of separation.
    pub fn is_clear(&self, min_gap: f64) -> bool {
        self.gap_ratio >= min_gap
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Smallest singular value that counts toward the rank, or 0.
    pub fn sigma_min_kept(&self) -> f64 {
        if self.rank == 0 {
            0.0
        } else {
            self.singular_values[self.rank - 1]
        }
    }
}

/// Rank from singular values `s` (descending) with relative tolerance `tol`.
pub fn rank_from_singular_values(s: &[f64], tol: f64) -> RankReport {
    assert!(tol > 0.0, "rank tolerance must be positive");
    let smax = s.first().copied().unwrap_or(0.0);
    let cut = tol * smax;
    let rank = if smax <= tol {
        0
    } else {
        s.iter().take_while(|&&v| v > cut).count()
    };
    let gap_ratio = if rank == 0 {
        if smax == 0.0 {
            f64::INFINITY
        } else {
            tol / smax
        }
    } else if rank < s.len() {
        let next = s[rank];
        if next == 0.0 {
            f64::INFINITY
        } else {
            s[rank - 1] / next
        }
    } else {
        s[rank - 1] / cut
    };
    RankReport {
        rank,
        singular_values: s.to_vec(),
        tolerance_used: tol,
        gap_ratio,
    }
}

/// Numerical rank: the number of singular values above `tol·σ_max`, and 0
/// when `σ_max ≤ tol`.
pub fn numeric_rank(m: &Mat, tol: f64) -> RankReport {
    let k = m.rows().min(m.cols());
    let s = svd(m).s;
    rank_from_singular_values(&s[..k], tol)
}

/// Determinant by LU factorization with partial pivoting.
pub fn determinant(m: &Mat) -> Result<f64, LinalgError> {
    if m.rows() != m.cols() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut det = 1.0;
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, a[(i, k)].abs()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if pivot == 0.0 {
            return Ok(0.0);
        }
        if p != k {
            for j in 0..n {
                let t = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = t;
            }
            det = -det;
        }
        let d = a[(k, k)];
        det *= d;
        for i in k + 1..n {
            let f = a[(i, k)] / d;
            if f == 0.0 {
                continue;
            }
            for j in k + 1..n {
                a[(i, j)] -= f * a[(k, j)];
            }
        }
    }
    Ok(det)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_ranks() {
        assert_eq!(numeric_rank(&Mat::identity(3), 1e-8).rank, 3);
        let m = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        let r = numeric_rank(&m, 1e-8);
        assert_eq!(r.rank, 1);
        assert!(r.gap_ratio > 1e8);
        assert_eq!(numeric_rank(&Mat::zeros(2, 3), 1e-8).rank, 0);
    }

    #[test]
    fn sphere_frame_at_pole_of_circle_has_rank_one() {
        // V1 = (-2x2, 2x1, 0), V2 = (-2x3, 0, 2x1) at (0, 1, 0).
        let m = Mat::from_rows(&[[-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        assert_eq!(numeric_rank(&m, 1e-8).rank, 1);
    }

    #[test]
    fn full_rank_gap_measures_distance_to_threshold() {
        let m = Mat::from_rows(&[[2.0, 0.0], [0.0, 1e-3]]);
        let r = numeric_rank(&m, 1e-8);
        assert_eq!(r.rank, 2);
        assert!((r.gap_ratio - 1e-3 / (2.0 * 1e-8)).abs() / r.gap_ratio < 1e-12);
    }

    #[test]
    fn determinant_of_identity_and_swap() {
        assert_eq!(determinant(&Mat::identity(4)).unwrap(), 1.0);
        let m = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(determinant(&m).unwrap(), -1.0);
        let m = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert!((determinant(&m).unwrap() + 2.0).abs() < 1e-15);
        assert!(determinant(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn vstack_and_selection() {
        let a = Mat::from_rows(&[[1.0, 2.0]]);
        let b = Mat::from_rows(&[[3.0, 4.0], [5.0, 6.0]]);
        let c = a.vstack(&b);
        assert_eq!(c.rows(), 3);
        assert_eq!(c.select_rows(&[2, 0]).as_slice(), &[5.0, 6.0, 1.0, 2.0]);
        assert_eq!(c.select_cols(&[1]).as_slice(), &[2.0, 4.0, 6.0]);
    }
}
