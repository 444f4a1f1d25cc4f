use super::Mat;

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ`.
///
/// `u` is rows×cols, `s` has `cols` entries in descending order and `v` is a
/// full cols×cols orthogonal matrix, so the trailing columns of `v` span the
/// numerical null space even when `rows < cols` (the extra singular values
/// are then zero).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD. Wide matrices are padded with zero rows.
pub fn svd(a: &Mat) -> Svd {
    let (m, n) = (a.rows(), a.cols());
    let rows = m.max(n);
    // Work column-major: w[j] is column j.
    let mut w: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = a.col(j);
            c.resize(rows, 0.0);
            c
        })
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = vec![0.0; n];
            c[j] = 1.0;
            c
        })
        .collect();

    let eps = f64::EPSILON;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&w[p], &w[q]);
                    let mut al = 0.0;
                    let mut be = 0.0;
                    let mut ga = 0.0;
                    for i in 0..rows {
                        al += cp[i] * cp[i];
                        be += cq[i] * cq[i];
                        ga += cp[i] * cq[i];
                    }
                    (al, be, ga)
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = w
        .iter()
        .enumerate()
        .map(|(j, c)| (super::norm(c), j))
        .collect();
    // Stable: equal singular values keep column order.
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut u = Mat::zeros(m, n);
    let mut vm = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &(sigma, j)) in order.iter().enumerate() {
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..m {
                u[(i, k)] = w[j][i] / sigma;
            }
        }
        for i in 0..n {
            vm[(i, k)] = v[j][i];
        }
    }
    Svd { u, s, v: vm }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Minimum-norm least-squares solution of `a·x = b`, discarding singular
/// values at or below `tol·σ_max`.
pub fn min_norm_solve(a: &Mat, b: &[f64], tol: f64) -> Vec<f64> {
    assert_eq!(a.rows(), b.len(), "right-hand side length mismatch");
    let d = svd(a);
    let n = a.cols();
    let smax = d.s.first().copied().unwrap_or(0.0);
    let mut x = vec![0.0; n];
    if smax == 0.0 {
        return x;
    }
    for k in 0..n.min(a.rows()) {
        let sigma = d.s[k];
        if sigma <= tol * smax {
            break;
        }
        let coef = (0..a.rows()).map(|i| d.u[(i, k)] * b[i]).sum::<f64>() / sigma;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += coef * d.v[(j, k)];
        }
    }
    x
}

/// Orthonormal basis of the numerical right null space: the right singular
/// vectors whose singular values fall at or below `tol·σ_max`.
pub fn null_space(a: &Mat, tol: f64) -> Vec<Vec<f64>> {
    let d = svd(a);
    let n = a.cols();
    let smax = d.s.first().copied().unwrap_or(0.0);
    (0..n)
        .filter(|&k| smax == 0.0 || d.s[k] <= tol * smax)
        .map(|k| d.v.col(k))
        .collect()
}
