use std::collections::HashMap;

use super::build::{add, div, func, mul, neg, pow, scale, sub};
use super::{BinaryOp, Expr, Kind, UnaryOp};

/// Exact partial derivative of `e` with respect to variable `var`.
///
/// Shared subtrees are differentiated once. The result is correct wherever
/// `e` is smooth; singular points of `sqrt`, `log` and `/` surface only when
/// the derivative is evaluated.
pub fn differentiate(e: &Expr, var: usize) -> Expr {
    let mut memo = HashMap::new();
    diff_rec(e, var, &mut memo)
}

pub fn gradient(e: &Expr, dim: usize) -> Vec<Expr> {
    (0..dim).map(|j| differentiate(e, j)).collect()
}

/// Symmetric matrix of second derivatives; the upper triangle is computed and
/// mirrored.
pub fn hessian(e: &Expr, dim: usize) -> Vec<Vec<Expr>> {
    let grad = gradient(e, dim);
    let upper: Vec<Vec<Expr>> = grad
        .iter()
        .enumerate()
        .map(|(i, g)| (i..dim).map(|j| differentiate(g, j)).collect())
        .collect();
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let (r, c) = if i <= j { (i, j) } else { (j, i) };
                    upper[r][c - r].clone()
                })
                .collect()
        })
        .collect()
}

fn diff_rec(e: &Expr, var: usize, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(d) = memo.get(&e.ptr()) {
        return d.clone();
    }
    let d = match e.kind() {
        Kind::Const(_) => Expr::zero(),
        Kind::Var(i) => {
            if *i == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Kind::Unary(op, a) => {
            let da = diff_rec(a, var, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                match op {
                    UnaryOp::Neg => neg(&da),
                    UnaryOp::Sqrt => div(&da, &scale(2, e)),
                    UnaryOp::Sin => mul(&func(UnaryOp::Cos, a), &da),
                    UnaryOp::Cos => neg(&mul(&func(UnaryOp::Sin, a), &da)),
                    UnaryOp::Exp => mul(e, &da),
                    UnaryOp::Log => div(&da, a),
                }
            }
        }
        Kind::Binary(op, a, b) => {
            let da = diff_rec(a, var, memo);
            let db = diff_rec(b, var, memo);
            match op {
                BinaryOp::Add => add(&da, &db),
                BinaryOp::Sub => sub(&da, &db),
                BinaryOp::Mul => add(&mul(&da, b), &mul(a, &db)),
                BinaryOp::Div => {
                    let first = div(&da, b);
                    if db.is_zero() {
                        first
                    } else {
                        sub(&first, &div(&mul(a, &db), &pow(b, 2)))
                    }
                }
            }
        }
        Kind::Pow(a, n) => {
            let da = diff_rec(a, var, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                mul(&mul(&Expr::int(*n as i64), &pow(a, n - 1)), &da)
            }
        }
    };
    memo.insert(e.ptr(), d.clone());
    d
}
