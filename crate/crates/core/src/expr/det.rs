use std::collections::HashMap;

use super::build::{add, mul, sub};
use super::{simplify, Expr, ExprError, DEFAULT_NODE_CAP};

/// Determinant of a square matrix of expressions by cofactor expansion along
/// rows. Minors over the same column set are shared, so an n×n matrix costs
/// O(n·2ⁿ) products rather than n!.
pub fn symbolic_determinant(m: &[Vec<Expr>]) -> Result<Expr, ExprError> {
    symbolic_determinant_capped(m, DEFAULT_NODE_CAP)
}

pub fn symbolic_determinant_capped(m: &[Vec<Expr>], cap: usize) -> Result<Expr, ExprError> {
    let n = m.len();
    for row in m {
        if row.len() != n {
            return Err(ExprError::NotSquare {
                rows: n,
                cols: row.len(),
            });
        }
    }
    if n == 0 {
        return Ok(Expr::one());
    }
    assert!(n <= 64, "determinant size {n} exceeds 64");
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut memo = HashMap::new();
    minor(m, 0, full, cap, &mut memo)
}

/// Determinant of rows `row..n` restricted to the columns in `cols`.
fn minor(
    m: &[Vec<Expr>],
    row: usize,
    cols: u64,
    cap: usize,
    memo: &mut HashMap<u64, Expr>,
) -> Result<Expr, ExprError> {
    if let Some(e) = memo.get(&cols) {
        return Ok(e.clone());
    }
    let result = if row + 1 == m.len() {
        m[row][cols.trailing_zeros() as usize].clone()
    } else {
        let mut acc = Expr::zero();
        let mut sign_positive = true;
        let mut rest = cols;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let entry = &m[row][j];
            if !entry.is_zero() {
                let sub_minor = minor(m, row + 1, cols & !(1u64 << j), cap, memo)?;
                if !sub_minor.is_zero() {
                    let term = mul(entry, &sub_minor);
                    acc = if sign_positive {
                        add(&acc, &term)
                    } else {
                        sub(&acc, &term)
                    };
                }
            }
            sign_positive = !sign_positive;
        }
        let s = simplify(&acc);
        s.check_cap(cap)?;
        s
    };
    memo.insert(cols, result.clone());
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{gradient, parse_expr};

    fn vars() -> Vec<String> {
        vec!["x1".into(), "x2".into(), "x3".into()]
    }

    fn p(s: &str) -> Expr {
        parse_expr(s, &vars()).unwrap()
    }

    #[test]
    fn small_cases() {
        assert_eq!(symbolic_determinant(&[vec![p("x1")]]).unwrap(), p("x1"));
        let m = vec![vec![p("1"), p("2")], vec![p("3"), p("4")]];
        assert_eq!(symbolic_determinant(&m).unwrap(), Expr::int(-2));
        assert!(matches!(
            symbolic_determinant(&[vec![p("1"), p("2")]]),
            Err(ExprError::NotSquare { .. })
        ));
    }

    #[test]
    fn bordered_gradient_determinant() {
        let f = p("x1^2 - x1*x2 + x3^2");
        let fx1 = p("2*x1 - x2");
        let m = vec![
            gradient(&f, 3),
            gradient(&fx1, 3),
            vec![p("1"), p("0"), p("0")],
        ];
        let d = symbolic_determinant(&m).unwrap();
        for pt in [[0.3, -1.2, 0.7], [1.0, 2.0, 0.0], [-2.0, 0.5, -1.5]] {
            let v = d.eval(&pt).unwrap();
            assert!((v.abs() - 2.0 * pt[2].abs()).abs() < 1e-12, "{v} at {pt:?}");
        }
    }

    #[test]
    fn sign_follows_column_order() {
        let a = vec![
            vec![p("x1"), p("x2"), p("0")],
            vec![p("0"), p("x3"), p("1")],
            vec![p("2"), p("0"), p("x1*x2")],
        ];
        let d = symbolic_determinant(&a).unwrap();
        let x = [0.4, -0.9, 1.3];
        let num = x[0] * (x[2] * x[0] * x[1] - 0.0) - x[1] * (0.0 - 2.0) + 0.0;
        assert!((d.eval(&x).unwrap() - num).abs() < 1e-12);
    }
}
