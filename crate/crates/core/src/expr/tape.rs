//! Straight-line compiled form of a set of expressions.
//!
//! Structurally equal subexpressions are assigned one slot (value numbering),
//! so a gradient or a determinant that repeats the same minors evaluates each
//! of them once.

use std::collections::HashMap;

use super::{rational_to_f64, BinaryOp, DomainError, Expr, Kind, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(u32),
    Neg(u32),
    Sqrt(u32),
    Sin(u32),
    Cos(u32),
    Exp(u32),
    Log(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Powi(u32, u32),
}

#[derive(Hash, PartialEq, Eq)]
enum Key {
    Const(u64),
    Var(u32),
    Un(u8, u32),
    Bin(u8, u32, u32),
    Pow(u32, u32),
}

/// A compiled list of expressions sharing one instruction stream.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    arity: usize,
}

struct Builder {
    ops: Vec<Op>,
    by_key: HashMap<Key, u32>,
    by_ptr: HashMap<usize, (Expr, u32)>,
    arity: usize,
}

impl Builder {
    fn push(&mut self, key: Key, op: Op) -> u32 {
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.by_key.insert(key, slot);
        slot
    }

    fn slot(&mut self, e: &Expr) -> u32 {
        if let Some((_, s)) = self.by_ptr.get(&e.ptr()) {
            return *s;
        }
        let s = match e.kind() {
            Kind::Const(c) => {
                let v = rational_to_f64(c);
                self.push(Key::Const(v.to_bits()), Op::Const(v))
            }
            Kind::Var(i) => {
                self.arity = self.arity.max(i + 1);
                self.push(Key::Var(*i as u32), Op::Var(*i as u32))
            }
            Kind::Unary(op, a) => {
                let a = self.slot(a);
                let code = *op as u8;
                let instr = match op {
                    UnaryOp::Neg => Op::Neg(a),
                    UnaryOp::Sqrt => Op::Sqrt(a),
                    UnaryOp::Sin => Op::Sin(a),
                    UnaryOp::Cos => Op::Cos(a),
                    UnaryOp::Exp => Op::Exp(a),
                    UnaryOp::Log => Op::Log(a),
                };
                self.push(Key::Un(code, a), instr)
            }
            Kind::Binary(op, a, b) => {
                let (mut a, mut b) = (self.slot(a), self.slot(b));
                if matches!(op, BinaryOp::Add | BinaryOp::Mul) && a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                let instr = match op {
                    BinaryOp::Add => Op::Add(a, b),
                    BinaryOp::Sub => Op::Sub(a, b),
                    BinaryOp::Mul => Op::Mul(a, b),
                    BinaryOp::Div => Op::Div(a, b),
                };
                self.push(Key::Bin(*op as u8, a, b), instr)
            }
            Kind::Pow(a, n) => {
                let a = self.slot(a);
                self.push(Key::Pow(a, *n), Op::Powi(a, *n))
            }
        };
        // Keep the node alive so its address stays unique while compiling.
        self.by_ptr.insert(e.ptr(), (e.clone(), s));
        s
    }
}

impl Tape {
    pub fn new(exprs: &[Expr]) -> Tape {
        let mut b = Builder {
            ops: Vec::new(),
            by_key: HashMap::new(),
            by_ptr: HashMap::new(),
            arity: 0,
        };
        let outputs = exprs.iter().map(|e| b.slot(e)).collect();
        Tape {
            ops: b.ops,
            outputs,
            arity: b.arity,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Smallest point dimension the tape accepts.
    pub fn arity(&self) -> usize {
        self.arity
    }

    fn run(&self, x: &[f64], scratch: &mut Vec<f64>) {
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => x[i as usize],
                Op::Neg(a) => -scratch[a as usize],
                Op::Sqrt(a) => scratch[a as usize].sqrt(),
                Op::Sin(a) => scratch[a as usize].sin(),
                Op::Cos(a) => scratch[a as usize].cos(),
                Op::Exp(a) => scratch[a as usize].exp(),
                Op::Log(a) => scratch[a as usize].ln(),
                Op::Add(a, b) => scratch[a as usize] + scratch[b as usize],
                Op::Sub(a, b) => scratch[a as usize] - scratch[b as usize],
                Op::Mul(a, b) => scratch[a as usize] * scratch[b as usize],
                Op::Div(a, b) => scratch[a as usize] / scratch[b as usize],
                Op::Powi(a, n) => powi(scratch[a as usize], n),
            };
            scratch.push(v);
        }
    }

    /// Fast evaluation. Returns `false` if any output is not finite.
    pub fn eval_with(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> bool {
        assert!(x.len() >= self.arity, "point has too few coordinates");
        self.run(x, scratch);
        let mut ok = true;
        for (o, &s) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[s as usize];
            ok &= o.is_finite();
        }
        ok
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) -> bool {
        let mut scratch = Vec::new();
        self.eval_with(x, &mut scratch, out)
    }

    /// Evaluation that names the first failing operation.
    pub fn eval_checked(&self, x: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        let mut s: Vec<f64> = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Sqrt(a) if s[a as usize] < 0.0 => return Err(DomainError::SqrtNegative),
                Op::Log(a) if s[a as usize] <= 0.0 => return Err(DomainError::LogNonPositive),
                Op::Div(_, b) if s[b as usize] == 0.0 => return Err(DomainError::DivisionByZero),
                _ => {
                    let mut tmp = std::mem::take(&mut s);
                    let v = eval_one(op, x, &tmp);
                    std::mem::swap(&mut s, &mut tmp);
                    v
                }
            };
            if !v.is_finite() {
                return Err(DomainError::NonFinite);
            }
            s.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = s[slot as usize];
        }
        Ok(())
    }
}

fn eval_one(op: &Op, x: &[f64], s: &[f64]) -> f64 {
    match *op {
        Op::Const(c) => c,
        Op::Var(i) => x[i as usize],
        Op::Neg(a) => -s[a as usize],
        Op::Sqrt(a) => s[a as usize].sqrt(),
        Op::Sin(a) => s[a as usize].sin(),
        Op::Cos(a) => s[a as usize].cos(),
        Op::Exp(a) => s[a as usize].exp(),
        Op::Log(a) => s[a as usize].ln(),
        Op::Add(a, b) => s[a as usize] + s[b as usize],
        Op::Sub(a, b) => s[a as usize] - s[b as usize],
        Op::Mul(a, b) => s[a as usize] * s[b as usize],
        Op::Div(a, b) => s[a as usize] / s[b as usize],
        Op::Powi(a, n) => powi(s[a as usize], n),
    }
}

fn powi(v: f64, n: u32) -> f64 {
    match n {
        0 => 1.0,
        1 => v,
        2 => v * v,
        3 => v * v * v,
        _ => v.powi(n.min(i32::MAX as u32) as i32),
    }
}

/// A tape bundled with reusable scratch space.
#[derive(Debug, Clone)]
pub struct Evaluator {
    tape: std::sync::Arc<Tape>,
    scratch: Vec<f64>,
}

impl Evaluator {
    pub fn new(tape: std::sync::Arc<Tape>) -> Evaluator {
        Evaluator {
            tape,
            scratch: Vec::new(),
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn eval(&mut self, x: &[f64], out: &mut [f64]) -> bool {
        self.tape.eval_with(x, &mut self.scratch, out)
    }
}
