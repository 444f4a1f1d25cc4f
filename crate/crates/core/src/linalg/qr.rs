use serde::Serialize;

use super::{LinalgError, Mat};

/// Relative threshold on `|R_kk| / |R_00|` below which a pivot is dropped.
const QR_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeastSquares {
    pub solution: Vec<f64>,
    pub residual_norm: f64,
    pub rank: usize,
    /// Ratio of consecutive |R| diagonal entries at the rank cut, or of the
    /// last kept entry to the threshold when the rank is full.
    pub gap_ratio: f64,
    /// Set when the rank is short or the gap ratio is below 10.
    pub rank_deficient: bool,
}

/// Minimizes `‖a·s − b‖₂` with Householder QR and column pivoting. For
/// rank-deficient `a` the basic solution (zeros on dropped pivots) is
/// returned and the result is flagged.
pub fn least_squares(a: &Mat, b: &[f64]) -> Result<LeastSquares, LinalgError> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(LinalgError::Dimension(format!(
            "rhs has {} entries, matrix has {m} rows",
            b.len()
        )));
    }
    if m < n {
        return Err(LinalgError::Dimension(format!(
            "{m} rows is fewer than {n} columns"
        )));
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut col_norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| r[(i, j)].powi(2)).sum())
        .collect();

    for k in 0..n {
        // Pivot: largest remaining column norm, recomputed for stability.
        for (j, cn) in col_norms.iter_mut().enumerate().skip(k) {
            *cn = (k..m).map(|i| r[(i, j)].powi(2)).sum();
        }
        let p = (k..n).fold(k, |best, j| {
            if col_norms[j] > col_norms[best] {
                j
            } else {
                best
            }
        });
        if p != k {
            for i in 0..m {
                let t = r[(i, k)];
                r[(i, k)] = r[(i, p)];
                r[(i, p)] = t;
            }
            perm.swap(k, p);
            col_norms.swap(k, p);
        }
        let alpha = (k..m).map(|i| r[(i, k)].powi(2)).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let sign = if r[(k, k)] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let d: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm2;
            for i in k..m {
                r[(i, j)] -= d * v[i - k];
            }
        }
        let d: f64 = (k..m).map(|i| v[i - k] * qtb[i]).sum::<f64>() * 2.0 / vnorm2;
        for i in k..m {
            qtb[i] -= d * v[i - k];
        }
    }

    let r00 = if n > 0 { r[(0, 0)].abs() } else { 0.0 };
    let cut = QR_RANK_TOL * r00;
    let rank = if r00 == 0.0 {
        0
    } else {
        (0..n).take_while(|&k| r[(k, k)].abs() > cut).count()
    };
    let gap_ratio = if rank == 0 {
        if r00 == 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else if rank < n {
        let next = r[(rank, rank)].abs();
        if next == 0.0 {
            f64::INFINITY
        } else {
            r[(rank - 1, rank - 1)].abs() / next
        }
    } else {
        r[(rank - 1, rank - 1)].abs() / cut
    };

    let mut y = vec![0.0; n];
    for k in (0..rank).rev() {
        let s: f64 = (k + 1..rank).map(|j| r[(k, j)] * y[j]).sum();
        y[k] = (qtb[k] - s) / r[(k, k)];
    }
    let mut solution = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        solution[p] = y[k];
    }
    let ax = a.mul_vec(&solution);
    let residual_norm = ax
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(LeastSquares {
        solution,
        residual_norm,
        rank,
        gap_ratio,
        rank_deficient: rank < n || gap_ratio < 10.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let b = [3.0, -1.0, 0.5];
        let ls = least_squares(&Mat::identity(3), &b).unwrap();
        assert_eq!(ls.rank, 3);
        assert!(!ls.rank_deficient);
        assert!(ls.residual_norm < 1e-15);
        for (x, y) in ls.solution.iter().zip(b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn inconsistent_system_reports_residual() {
        // x = 0 and x = 1: best fit 1/2, residual 1/sqrt(2).
        let a = Mat::from_rows(&[[1.0], [1.0]]);
        let ls = least_squares(&a, &[0.0, 1.0]).unwrap();
        assert!((ls.solution[0] - 0.5).abs() < 1e-15);
        assert!((ls.residual_norm - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let a = Mat::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]);
        let ls = least_squares(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ls.rank, 1);
        assert!(ls.rank_deficient);
        assert!(ls.residual_norm < 1e-12);
    }

    #[test]
    fn wide_matrix_is_rejected() {
        assert!(least_squares(&Mat::zeros(1, 2), &[0.0]).is_err());
    }
}
