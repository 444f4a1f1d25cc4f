//! Text form of expressions. The output parses back to the same tree.

use std::fmt::{self, Write};

use num::{One, Signed};

use super::{BinaryOp, Expr, Kind, UnaryOp};

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_BASE: u8 = 3;

/// Display adapter carrying variable names.
pub struct Named<'a> {
    pub(super) expr: &'a Expr,
    pub(super) names: &'a [String],
}

impl fmt::Display for Named<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, self.names, 0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, &[], 0)
    }
}

fn prec(e: &Expr) -> u8 {
    match e.kind() {
        Kind::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_SUM,
        Kind::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PREC_PRODUCT,
        _ => PREC_BASE,
    }
}

fn write_const(f: &mut impl Write, c: &num::BigRational) -> fmt::Result {
    if c.denom().is_one() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

fn write_var(f: &mut impl Write, i: usize, names: &[String]) -> fmt::Result {
    match names.get(i) {
        Some(n) => f.write_str(n),
        None => write!(f, "x{}", i + 1),
    }
}

/// Writes `e` so that it parses as a `base` of the grammar.
fn write_base(f: &mut impl Write, e: &Expr, names: &[String]) -> fmt::Result {
    let atomic = match e.kind() {
        Kind::Var(_) => true,
        Kind::Const(c) => c.denom().is_one() && !c.is_negative(),
        Kind::Unary(op, _) => *op != UnaryOp::Neg,
        _ => false,
    };
    if atomic {
        write_expr(f, e, names, 0)
    } else {
        f.write_char('(')?;
        write_expr(f, e, names, 0)?;
        f.write_char(')')
    }
}

fn write_expr(f: &mut impl Write, e: &Expr, names: &[String], min_prec: u8) -> fmt::Result {
    let p = prec(e);
    if p < min_prec {
        f.write_char('(')?;
        write_expr(f, e, names, 0)?;
        return f.write_char(')');
    }
    match e.kind() {
        Kind::Const(c) => write_const(f, c),
        Kind::Var(i) => write_var(f, *i, names),
        Kind::Unary(UnaryOp::Neg, a) => {
            f.write_char('-')?;
            match a.kind() {
                Kind::Const(_) | Kind::Pow(..) => {
                    f.write_char('(')?;
                    write_expr(f, a, names, 0)?;
                    f.write_char(')')
                }
                _ => write_expr(f, a, names, PREC_BASE),
            }
        }
        Kind::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_expr(f, a, names, 0)?;
            f.write_char(')')
        }
        Kind::Binary(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinaryOp::Add => (" + ", PREC_SUM, PREC_PRODUCT),
                BinaryOp::Sub => (" - ", PREC_SUM, PREC_PRODUCT),
                BinaryOp::Mul => ("*", PREC_PRODUCT, PREC_BASE),
                BinaryOp::Div => ("/", PREC_PRODUCT, PREC_BASE),
            };
            write_expr(f, a, names, lp)?;
            f.write_str(sym)?;
            if *op == BinaryOp::Div && b.as_const().is_some() {
                f.write_char('(')?;
                write_expr(f, b, names, 0)?;
                f.write_char(')')
            } else {
                write_expr(f, b, names, rp)
            }
        }
        Kind::Pow(a, n) => {
            write_base(f, a, names)?;
            write!(f, "^{n}")
        }
    }
}
