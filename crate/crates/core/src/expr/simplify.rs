//! Canonical simplification.
//!
//! Sums are flattened into `coefficient * product` terms and like terms are
//! collected; products are flattened into `atom^exponent` factors. Products of
//! sums are never distributed: a multi-term sum appearing as a factor becomes
//! an atom in its canonical form. The result is never larger than the input.

use std::collections::HashMap;

use num::{BigRational, One, Signed, Zero};

use super::build;
use super::{BinaryOp, Expr, Kind, UnaryOp};

#[derive(Clone, Debug)]
struct Term {
    coeff: BigRational,
    factors: Vec<(Expr, u32)>,
}

impl Term {
    fn constant(c: BigRational) -> Term {
        Term {
            coeff: c,
            factors: Vec::new(),
        }
    }

    fn atom(e: Expr) -> Term {
        Term {
            coeff: BigRational::one(),
            factors: vec![(e, 1)],
        }
    }

    fn mul(&self, other: &Term) -> Term {
        let mut factors = Vec::with_capacity(self.factors.len() + other.factors.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.factors, &other.factors);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    factors.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    factors.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    factors.push((a[i].0.clone(), a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        factors.extend_from_slice(&a[i..]);
        factors.extend_from_slice(&b[j..]);
        Term {
            coeff: &self.coeff * &other.coeff,
            factors,
        }
    }

    fn powi(&self, n: u32) -> Term {
        Term {
            coeff: num::pow::pow(self.coeff.clone(), n as usize),
            factors: self
                .factors
                .iter()
                .map(|(e, k)| (e.clone(), k * n))
                .collect(),
        }
    }
}

fn cmp_factors(a: &[(Expr, u32)], b: &[(Expr, u32)]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.0.cmp(&y.0).then(x.1.cmp(&y.1));
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

fn normalize(mut terms: Vec<Term>) -> Vec<Term> {
    terms.sort_by(|a, b| cmp_factors(&a.factors, &b.factors));
    let mut out: Vec<Term> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last) if cmp_factors(&last.factors, &t.factors).is_eq() => {
                last.coeff += t.coeff;
            }
            _ => out.push(t),
        }
    }
    out.retain(|t| !t.coeff.is_zero());
    out
}

struct Simplifier {
    memo: HashMap<usize, Expr>,
}

impl Simplifier {
    fn run(&mut self, e: &Expr) -> Expr {
        if let Some(s) = self.memo.get(&e.ptr()) {
            return s.clone();
        }
        let s = self.simplify_node(e);
        self.memo.insert(e.ptr(), s.clone());
        s
    }

    fn simplify_node(&mut self, e: &Expr) -> Expr {
        match e.kind() {
            Kind::Const(_) | Kind::Var(_) => e.clone(),
            Kind::Unary(op, a) if *op != UnaryOp::Neg => {
                let sa = self.run(a);
                build::func(*op, &sa)
            }
            Kind::Binary(BinaryOp::Div, a, b) => {
                let (sa, sb) = (self.run(a), self.run(b));
                if sb.as_const().is_some() || sa.is_zero() {
                    let local = Expr::binary(BinaryOp::Div, sa, sb);
                    self.polynomial(e, &local)
                } else if sa == sb {
                    Expr::one()
                } else {
                    Expr::binary(BinaryOp::Div, sa, sb)
                }
            }
            _ => {
                let local = self.rebuild_children(e);
                self.polynomial(e, &local)
            }
        }
    }

    fn rebuild_children(&mut self, e: &Expr) -> Expr {
        match e.kind() {
            Kind::Unary(op, a) => Expr::unary(*op, self.run(a)),
            Kind::Binary(op, a, b) => Expr::binary(*op, self.run(a), self.run(b)),
            Kind::Pow(a, n) => Expr::pow(self.run(a), *n),
            _ => e.clone(),
        }
    }

    /// Canonical form of `local` (whose children are already simplified),
    /// unless that is larger than the original `e`.
    fn polynomial(&mut self, e: &Expr, local: &Expr) -> Expr {
        let terms = normalize(self.linear_form(local));
        let canon = rebuild_sum(&terms);
        let fallback = self.local_fold(local);
        if canon.node_count() <= fallback.node_count() && canon.node_count() <= e.node_count() {
            canon
        } else if fallback.node_count() <= e.node_count() {
            fallback
        } else {
            e.clone()
        }
    }

    fn local_fold(&mut self, local: &Expr) -> Expr {
        match local.kind() {
            Kind::Unary(UnaryOp::Neg, a) => build::neg(a),
            Kind::Binary(BinaryOp::Add, a, b) => build::add(a, b),
            Kind::Binary(BinaryOp::Sub, a, b) => build::sub(a, b),
            Kind::Binary(BinaryOp::Mul, a, b) => build::mul(a, b),
            Kind::Binary(BinaryOp::Div, a, b) => build::div(a, b),
            Kind::Pow(a, n) => build::pow(a, *n),
            _ => local.clone(),
        }
    }

    /// Sum-of-terms view of an expression whose children are simplified.
    fn linear_form(&mut self, e: &Expr) -> Vec<Term> {
        match e.kind() {
            Kind::Const(c) => {
                if c.is_zero() {
                    vec![]
                } else {
                    vec![Term::constant(c.clone())]
                }
            }
            Kind::Unary(UnaryOp::Neg, a) => negate(self.linear_form(a)),
            Kind::Binary(BinaryOp::Add, a, b) => {
                let mut t = self.linear_form(a);
                t.extend(self.linear_form(b));
                t
            }
            Kind::Binary(BinaryOp::Sub, a, b) => {
                let mut t = self.linear_form(a);
                t.extend(negate(self.linear_form(b)));
                t
            }
            Kind::Binary(BinaryOp::Mul, a, b) => {
                if let Some(c) = a.as_const() {
                    return scale_terms(self.linear_form(b), c);
                }
                if let Some(c) = b.as_const() {
                    return scale_terms(self.linear_form(a), c);
                }
                match (self.factor_form(a), self.factor_form(b)) {
                    (Some(x), Some(y)) => vec![x.mul(&y)],
                    _ => vec![],
                }
            }
            Kind::Binary(BinaryOp::Div, a, b) if b.as_const().is_some_and(|c| !c.is_zero()) => {
                let inv = b
                    .as_const()
                    .map(|c| c.recip())
                    .unwrap_or_else(BigRational::one);
                scale_terms(self.linear_form(a), &inv)
            }
            Kind::Pow(a, n) => match self.factor_form(a) {
                Some(t) => vec![t.powi(*n)],
                None if *n == 0 => vec![Term::constant(BigRational::one())],
                None => vec![],
            },
            _ => vec![Term::atom(e.clone())],
        }
    }

    /// Single-term view; `None` means the expression is zero. Multi-term
    /// sums become atoms.
    fn factor_form(&mut self, e: &Expr) -> Option<Term> {
        let terms = normalize(self.linear_form(e));
        match terms.len() {
            0 => None,
            1 => terms.into_iter().next(),
            _ => Some(Term::atom(rebuild_sum(&terms))),
        }
    }
}

fn scale_terms(terms: Vec<Term>, c: &BigRational) -> Vec<Term> {
    if c.is_zero() {
        return Vec::new();
    }
    terms
        .into_iter()
        .map(|mut t| {
            t.coeff *= c;
            t
        })
        .collect()
}

fn negate(terms: Vec<Term>) -> Vec<Term> {
    terms
        .into_iter()
        .map(|mut t| {
            t.coeff = -t.coeff;
            t
        })
        .collect()
}

fn rebuild_product(factors: &[(Expr, u32)]) -> Option<Expr> {
    let mut acc: Option<Expr> = None;
    for (atom, k) in factors {
        let f = if *k == 1 {
            atom.clone()
        } else {
            Expr::pow(atom.clone(), *k)
        };
        acc = Some(match acc {
            None => f,
            Some(a) => Expr::binary(BinaryOp::Mul, a, f),
        });
    }
    acc
}

/// `|coeff| * product`, or the signed constant when there are no factors.
fn rebuild_magnitude(t: &Term) -> Expr {
    match rebuild_product(&t.factors) {
        None => Expr::constant(t.coeff.abs()),
        Some(p) if t.coeff.abs().is_one() => p,
        Some(p) => Expr::binary(BinaryOp::Mul, Expr::constant(t.coeff.abs()), p),
    }
}

fn rebuild_sum(terms: &[Term]) -> Expr {
    let mut iter = terms.iter();
    let Some(first) = iter.next() else {
        return Expr::zero();
    };
    let mut acc = if first.factors.is_empty() {
        Expr::constant(first.coeff.clone())
    } else if first.coeff.is_negative() {
        Expr::unary(UnaryOp::Neg, rebuild_magnitude(first))
    } else {
        rebuild_magnitude(first)
    };
    for t in iter {
        let mag = rebuild_magnitude(t);
        let op = if t.coeff.is_negative() {
            BinaryOp::Sub
        } else {
            BinaryOp::Add
        };
        acc = Expr::binary(op, acc, mag);
    }
    acc
}

/// Value-preserving canonical simplification. Idempotent, and never
/// increases [`Expr::node_count`].
pub fn simplify(e: &Expr) -> Expr {
    let mut current = e.clone();
    // A pass can expose a smaller canonical form to the next one; sizes never
    // grow, so this settles quickly.
    for _ in 0..8 {
        let next = Simplifier {
            memo: HashMap::new(),
        }
        .run(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use proptest::prelude::*;

    fn vars() -> Vec<String> {
        vec!["x1".into(), "x2".into(), "x3".into()]
    }

    fn s(text: &str) -> Expr {
        simplify(&parse_expr(text, &vars()).unwrap())
    }

    #[test]
    fn zero_and_one_identities() {
        assert_eq!(s("0*x1 + x2"), parse_expr("x2", &vars()).unwrap());
        assert_eq!(s("1*x1"), parse_expr("x1", &vars()).unwrap());
        assert_eq!(s("x1^0"), Expr::one());
    }

    #[test]
    fn like_terms_cancel() {
        assert!(s("x1*x2 - x2*x1").is_zero());
        assert!(s("(x1 + x2)*(x3 - 1) - (x3 - 1)*(x2 + x1)").is_zero());
        assert_eq!(s("x1 + x1 + x1"), s("3*x1"));
        assert_eq!(s("x1*x1*x2/2"), s("1/2*x2*x1^2"));
    }

    #[test]
    fn constants_fold() {
        assert_eq!(
            s("2*3 + 4/8"),
            Expr::constant(BigRational::new(13.into(), 2.into()))
        );
        assert_eq!(
            s("sqrt(9/4)"),
            Expr::constant(BigRational::new(3.into(), 2.into()))
        );
        assert!(s("sin(0) + log(1)").is_zero());
    }

    #[test]
    fn quotient_of_equal_parts_is_one() {
        assert!(s("(x1 + x2)/(x2 + x1)").is_one());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-3i64..4).prop_map(Expr::int),
            (0usize..3).prop_map(Expr::var),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Add, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Sub, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Mul, a, b)),
                (inner.clone(), 0u32..4).prop_map(|(a, n)| Expr::pow(a, n)),
                inner.clone().prop_map(|a| Expr::unary(UnaryOp::Neg, a)),
                inner.clone().prop_map(|a| Expr::unary(UnaryOp::Sin, a)),
                inner.clone().prop_map(|a| Expr::binary(
                    BinaryOp::Div,
                    a,
                    parse_expr("x1^2 + 1", &["x1".to_string()]).unwrap()
                )),
            ]
        })
    }

    proptest! {
        #[test]
        fn simplify_preserves_values_and_size(e in arb_expr(), p in prop::array::uniform3(-2.0f64..2.0)) {
            let t = simplify(&e);
            prop_assert!(t.node_count() <= e.node_count());
            let (a, b) = (e.eval(&p).unwrap(), t.eval(&p).unwrap());
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{} vs {}: {} {}", e, t, a, b);
        }

        #[test]
        fn simplify_is_idempotent(e in arb_expr()) {
            let once = simplify(&e);
            let twice = simplify(&once);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn printing_round_trips(e in arb_expr()) {
            let names = vars();
            let back = parse_expr(&e.display_with(&names).to_string(), &names).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
