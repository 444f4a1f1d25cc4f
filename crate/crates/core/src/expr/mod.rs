//! Symbolic scalar expressions over the ambient coordinates.
//!
//! Every defining function used by the stratification (constraints, coframe
//! components, bordered minors, the determinant chain) is an [`Expr`]. Trees
//! are immutable and reference counted, so sharing subtrees is free and the
//! differentiation of a shared node happens once per call.

mod det;
mod diff;
mod parse;
mod print;
mod simplify;
mod tape;

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use det::symbolic_determinant;
pub use diff::{differentiate, gradient, hessian};
pub use parse::parse_expr;
pub use simplify::simplify;
pub use tape::{Evaluator, Tape};

/// Default cap on the number of distinct nodes in a single expression.
pub const DEFAULT_NODE_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { name: String, pos: usize },
    #[error("exponent at byte {pos} must be a non-negative integer literal")]
    NonIntegerExponent { pos: usize },
    #[error("function `{name}` at byte {pos} is not smooth and is not supported")]
    NonSmooth { name: String, pos: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("expression has {nodes} distinct nodes, over the cap of {cap}")]
    NodeCap { nodes: usize, cap: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("point has {got} coordinates, expected {expected}")]
    Arity { got: usize, expected: usize },
}

/// A failure to evaluate an expression in floating point.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("square root of a negative number")]
    SqrtNegative,
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive number")]
    LogNonPositive,
    #[error("non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "sqrt" => UnaryOp::Sqrt,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// The node kinds of an expression tree.
#[derive(Debug, Clone)]
pub enum Kind {
    Const(BigRational),
    Var(usize),
    Unary(UnaryOp, Expr),
    Binary(BinaryOp, Expr, Expr),
    /// Integer power with a non-negative exponent.
    Pow(Expr, u32),
}

#[derive(Debug)]
struct Node {
    kind: Kind,
    hash: u64,
    size: u64,
}

/// Immutable, shareable expression tree.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn mix(h: u64, v: u64) -> u64 {
    let mut h = h;
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn hash_bigint(h: u64, v: &BigInt) -> u64 {
    let mut h = h;
    for b in v.to_signed_bytes_le() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix(h, 0xff)
}

impl Expr {
    fn from_kind(kind: Kind) -> Expr {
        let (hash, size) = match &kind {
            Kind::Const(c) => {
                let h = hash_bigint(mix(FNV_OFFSET, 1), c.numer());
                (hash_bigint(h, c.denom()), 1)
            }
            Kind::Var(i) => (mix(mix(FNV_OFFSET, 2), *i as u64), 1),
            Kind::Unary(op, a) => (
                mix(mix(mix(FNV_OFFSET, 3), *op as u64), a.0.hash),
                a.0.size.saturating_add(1),
            ),
            Kind::Binary(op, a, b) => (
                mix(mix(mix(mix(FNV_OFFSET, 4), *op as u64), a.0.hash), b.0.hash),
                a.0.size.saturating_add(b.0.size).saturating_add(1),
            ),
            Kind::Pow(a, n) => (
                mix(mix(mix(FNV_OFFSET, 5), *n as u64), a.0.hash),
                a.0.size.saturating_add(1),
            ),
        };
        Expr(Arc::new(Node { kind, hash, size }))
    }

    pub fn constant(c: BigRational) -> Expr {
        Expr::from_kind(Kind::Const(c))
    }

    pub fn int(v: i64) -> Expr {
        Expr::constant(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn var(index: usize) -> Expr {
        Expr::from_kind(Kind::Var(index))
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        Expr::from_kind(Kind::Unary(op, a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::from_kind(Kind::Binary(op, a, b))
    }

    pub fn pow(a: Expr, n: u32) -> Expr {
        Expr::from_kind(Kind::Pow(a, n))
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    /// Number of nodes in the tree, counting shared subtrees once per use.
    /// Saturates at `u64::MAX`.
    pub fn node_count(&self) -> u64 {
        self.0.size
    }

    /// Number of structurally distinct nodes.
    pub fn dag_size(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.clone()) {
                continue;
            }
            match e.kind() {
                Kind::Const(_) | Kind::Var(_) => {}
                Kind::Unary(_, a) | Kind::Pow(a, _) => stack.push(a.clone()),
                Kind::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
            }
        }
        seen.len()
    }

    /// Fails with [`ExprError::NodeCap`] when the distinct-node count exceeds `cap`.
    pub fn check_cap(&self, cap: usize) -> Result<(), ExprError> {
        let nodes = self.dag_size();
        if nodes > cap {
            Err(ExprError::NodeCap { nodes, cap })
        } else {
            Ok(())
        }
    }

    pub fn as_const(&self) -> Option<&BigRational> {
        match self.kind() {
            Kind::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_one())
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut seen = std::collections::HashSet::new();
        let mut best = None;
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(Arc::as_ptr(&e.0) as usize) {
                continue;
            }
            match e.kind() {
                Kind::Const(_) => {}
                Kind::Var(i) => best = Some(best.map_or(*i, |b: usize| b.max(*i))),
                Kind::Unary(_, a) | Kind::Pow(a, _) => stack.push(a.clone()),
                Kind::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
            }
        }
        best
    }

    /// Evaluates at `point` with precise domain errors.
    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        evaluate(self, point)
    }

    pub(crate) fn ptr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn display_with<'a>(&'a self, names: &'a [String]) -> print::Named<'a> {
        print::Named { expr: self, names }
    }
}

/// Evaluates `e` at `point`. NaN or infinite results are reported as errors.
pub fn evaluate(e: &Expr, point: &[f64]) -> Result<f64, ExprError> {
    let tape = Tape::new(std::slice::from_ref(e));
    if let Some(v) = e.max_var() {
        if v >= point.len() {
            return Err(ExprError::Arity {
                got: point.len(),
                expected: v + 1,
            });
        }
    }
    let mut out = [0.0];
    tape.eval_checked(point, &mut out)?;
    Ok(out[0])
}

pub(crate) fn rational_to_f64(c: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (c.numer().to_f64(), c.denom().to_f64()) {
        if n.is_finite() && d.is_finite() {
            return n / d;
        }
    }
    // Very large numerators or denominators: shift both before dividing.
    let bits = c.numer().bits().max(c.denom().bits()) as i64 - 60;
    let shift = bits.max(0) as usize;
    let n = (c.numer() >> shift).to_f64().unwrap_or(0.0);
    let d = (c.denom() >> shift).to_f64().unwrap_or(1.0);
    n / d
}

/// Exact conversion of a finite float to a rational.
pub fn rational_from_f64(v: f64) -> Option<BigRational> {
    BigRational::from_float(v)
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.0.hash != other.0.hash || self.0.size != other.0.size {
            return false;
        }
        match (self.kind(), other.kind()) {
            (Kind::Const(a), Kind::Const(b)) => a == b,
            (Kind::Var(a), Kind::Var(b)) => a == b,
            (Kind::Unary(o1, a1), Kind::Unary(o2, a2)) => o1 == o2 && a1 == a2,
            (Kind::Binary(o1, a1, b1), Kind::Binary(o2, a2, b2)) => {
                o1 == o2 && a1 == a2 && b1 == b2
            }
            (Kind::Pow(a1, n1), Kind::Pow(a2, n2)) => n1 == n2 && a1 == a2,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

fn kind_tag(k: &Kind) -> u8 {
    match k {
        Kind::Const(_) => 0,
        Kind::Var(_) => 1,
        Kind::Unary(..) => 2,
        Kind::Binary(..) => 3,
        Kind::Pow(..) => 4,
    }
}

/// A total, deterministic order used for canonical forms. It is not a
/// mathematical order.
impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (ka, kb) = (self.kind(), other.kind());
        let tag = kind_tag(ka).cmp(&kind_tag(kb));
        if tag != Ordering::Equal {
            return tag;
        }
        match (ka, kb) {
            (Kind::Const(a), Kind::Const(b)) => a.cmp(b),
            (Kind::Var(a), Kind::Var(b)) => a.cmp(b),
            _ => self
                .0
                .size
                .cmp(&other.0.size)
                .then(self.0.hash.cmp(&other.0.hash))
                .then_with(|| match (ka, kb) {
                    (Kind::Unary(o1, a1), Kind::Unary(o2, a2)) => {
                        o1.cmp(o2).then_with(|| a1.cmp(a2))
                    }
                    (Kind::Binary(o1, a1, b1), Kind::Binary(o2, a2, b2)) => {
                        o1.cmp(o2).then_with(|| a1.cmp(a2)).then_with(|| b1.cmp(b2))
                    }
                    (Kind::Pow(a1, n1), Kind::Pow(a2, n2)) => n1.cmp(n2).then_with(|| a1.cmp(a2)),
                    _ => Ordering::Equal,
                }),
        }
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Folding constructors. They apply only local identities (constant folding,
/// zero and one elimination) and never inspect deeper than one level.
pub mod build {
    use super::*;

    pub fn neg(a: &Expr) -> Expr {
        match a.kind() {
            Kind::Const(c) => Expr::constant(-c.clone()),
            Kind::Unary(UnaryOp::Neg, inner) => inner.clone(),
            _ => Expr::unary(UnaryOp::Neg, a.clone()),
        }
    }

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), _) if x.is_zero() => b.clone(),
            (_, Some(y)) if y.is_zero() => a.clone(),
            _ => match b.kind() {
                Kind::Unary(UnaryOp::Neg, inner) => {
                    Expr::binary(BinaryOp::Sub, a.clone(), inner.clone())
                }
                _ => Expr::binary(BinaryOp::Add, a.clone(), b.clone()),
            },
        }
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (Some(x), _) if x.is_zero() => neg(b),
            (_, Some(y)) if y.is_zero() => a.clone(),
            _ if a == b => Expr::zero(),
            _ => match b.kind() {
                Kind::Unary(UnaryOp::Neg, inner) => {
                    Expr::binary(BinaryOp::Add, a.clone(), inner.clone())
                }
                _ => Expr::binary(BinaryOp::Sub, a.clone(), b.clone()),
            },
        }
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) if x.is_zero() => Expr::zero(),
            (_, Some(y)) if y.is_zero() => Expr::zero(),
            (Some(x), _) if x.is_one() => b.clone(),
            (_, Some(y)) if y.is_one() => a.clone(),
            (Some(x), _) if (-x).is_one() => neg(b),
            (_, Some(y)) if (-y).is_one() => neg(a),
            // Keep constants on the left.
            (None, Some(_)) => Expr::binary(BinaryOp::Mul, b.clone(), a.clone()),
            _ => Expr::binary(BinaryOp::Mul, a.clone(), b.clone()),
        }
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (_, Some(y)) if y.is_zero() => Expr::binary(BinaryOp::Div, a.clone(), b.clone()),
            (Some(x), Some(y)) => Expr::constant(x / y),
            (Some(x), _) if x.is_zero() => Expr::zero(),
            (_, Some(y)) if y.is_one() => a.clone(),
            (_, Some(y)) => mul(&Expr::constant(y.recip()), a),
            _ if a == b => Expr::one(),
            _ => Expr::binary(BinaryOp::Div, a.clone(), b.clone()),
        }
    }

    pub fn pow(a: &Expr, n: u32) -> Expr {
        match (n, a.as_const()) {
            (0, _) => Expr::one(),
            (1, _) => a.clone(),
            (_, Some(c)) if n <= 64 => Expr::constant(num::pow::pow(c.clone(), n as usize)),
            _ => match a.kind() {
                Kind::Pow(inner, m) if (*m as u64) * (n as u64) <= u32::MAX as u64 => {
                    Expr::pow(inner.clone(), m * n)
                }
                _ => Expr::pow(a.clone(), n),
            },
        }
    }

    pub fn func(op: UnaryOp, a: &Expr) -> Expr {
        if op == UnaryOp::Neg {
            return neg(a);
        }
        if let Some(c) = a.as_const() {
            match op {
                UnaryOp::Sqrt => {
                    if !c.is_negative() {
                        let n = c.numer().sqrt();
                        let d = c.denom().sqrt();
                        if &n * &n == *c.numer() && &d * &d == *c.denom() {
                            return Expr::constant(BigRational::new(n, d));
                        }
                    }
                }
                UnaryOp::Sin if c.is_zero() => return Expr::zero(),
                UnaryOp::Cos | UnaryOp::Exp if c.is_zero() => return Expr::one(),
                UnaryOp::Log if c.is_one() => return Expr::zero(),
                _ => {}
            }
        }
        Expr::unary(op, a.clone())
    }

    pub fn scale(c: i64, a: &Expr) -> Expr {
        mul(&Expr::int(c), a)
    }

    /// Sum of many terms, folding as it goes.
    pub fn sum<'a>(terms: impl IntoIterator<Item = &'a Expr>) -> Expr {
        terms.into_iter().fold(Expr::zero(), |acc, t| add(&acc, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars3() -> Vec<String> {
        vec!["x1".into(), "x2".into(), "x3".into()]
    }

    #[test]
    fn evaluation_reports_domain_errors() {
        let v = vars3();
        let e = parse_expr("sqrt(x1)", &v).unwrap();
        assert_eq!(
            evaluate(&e, &[-1.0, 0.0, 0.0]),
            Err(ExprError::Domain(DomainError::SqrtNegative))
        );
        let e = parse_expr("1/x2", &v).unwrap();
        assert_eq!(
            evaluate(&e, &[1.0, 0.0, 0.0]),
            Err(ExprError::Domain(DomainError::DivisionByZero))
        );
        let e = parse_expr("log(x3)", &v).unwrap();
        assert_eq!(
            evaluate(&e, &[1.0, 1.0, 0.0]),
            Err(ExprError::Domain(DomainError::LogNonPositive))
        );
    }

    #[test]
    fn evaluation_checks_arity() {
        let e = parse_expr("x3", &vars3()).unwrap();
        assert!(matches!(evaluate(&e, &[1.0]), Err(ExprError::Arity { .. })));
    }

    #[test]
    fn variable_evaluates_to_coordinate() {
        let e = parse_expr("x1", &vars3()).unwrap();
        assert_eq!(evaluate(&e, &[0.25, -3.0, 9.0]).unwrap(), 0.25);
    }

    #[test]
    fn ex7_sigma1_equation_vanishes_at_cusp_point() {
        let e = parse_expr("2*x1 - x2", &vars3()).unwrap();
        assert_eq!(evaluate(&e, &[1.0, 2.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn torus_point_lies_on_level_set() {
        let v = vars3();
        let f = parse_expr("(sqrt(x2^2+x3^2)-2)^2+(x1+x2)^2", &v).unwrap();
        assert!((evaluate(&f, &[3.0, -3.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((evaluate(&f, &[0.0, 3.0, 0.0]).unwrap() - 10.0).abs() < 1e-15);
    }

    #[test]
    fn cap_is_enforced() {
        let v = vars3();
        let e = parse_expr("x1*x2 + x3", &v).unwrap();
        assert!(e.check_cap(5).is_ok());
        assert!(matches!(
            e.check_cap(4),
            Err(ExprError::NodeCap { nodes: 5, cap: 4 })
        ));
    }

    #[test]
    fn structural_equality_ignores_sharing() {
        let a = Expr::binary(BinaryOp::Add, Expr::var(0), Expr::int(2));
        let b = Expr::binary(BinaryOp::Add, Expr::var(0), Expr::int(2));
        assert_eq!(a, b);
        assert_eq!(a.cmp(&b), Ordering::Equal);
        assert_ne!(a, Expr::binary(BinaryOp::Add, Expr::int(2), Expr::var(0)));
    }
}
