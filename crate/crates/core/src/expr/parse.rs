//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := base ("^" unsigned-integer)?
//! base   := number | identifier | function "(" expr ")" | "(" expr ")" | "-" base
//! ```
//!
//! Numbers are decimal (`1.25`, `3e-2`) or rational literals (`2/3`). A
//! rational literal is only recognised where a number may start a factor, so
//! `x/2/3` still means `(x/2)/3`. A minus sign directly in front of a number
//! literal produces a negative constant.

use num::{BigInt, BigRational, Zero};

use super::{BinaryOp, Expr, ExprError, UnaryOp};

const NON_SMOOTH: &[&str] = &["abs", "sign", "floor", "ceil", "min", "max", "round"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Int(u32),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    prev: Option<Tok>,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn digits(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => self.number(start)?,
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                Tok::Ident(s.to_string())
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        self.prev = Some(tok.clone());
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<Tok, ExprError> {
        let after_caret = matches!(self.prev, Some(Tok::Caret));
        let after_slash = matches!(self.prev, Some(Tok::Slash));
        let int_part = self.digits().to_string();
        if after_caret {
            if self.src.get(self.pos) == Some(&b'.') {
                return Err(ExprError::NonIntegerExponent { pos: start });
            }
            return int_part
                .parse::<u32>()
                .map(Tok::Int)
                .map_err(|_| ExprError::NonIntegerExponent { pos: start });
        }
        let mut frac = String::new();
        let mut decimal = false;
        if self.src.get(self.pos) == Some(&b'.') {
            decimal = true;
            self.pos += 1;
            frac = self.digits().to_string();
        }
        if int_part.is_empty() && frac.is_empty() {
            return Err(ExprError::Syntax {
                pos: start,
                msg: "malformed number".into(),
            });
        }
        let mut exp: i64 = 0;
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            let mut sign = 1;
            match self.src.get(self.pos) {
                Some(b'+') => self.pos += 1,
                Some(b'-') => {
                    sign = -1;
                    self.pos += 1
                }
                _ => {}
            }
            let d = self.digits();
            if d.is_empty() {
                self.pos = save;
            } else {
                decimal = true;
                exp = sign
                    * d.parse::<i64>().map_err(|_| ExprError::Syntax {
                        pos: start,
                        msg: "exponent out of range".into(),
                    })?;
            }
        }
        let mantissa: BigInt = format!("{int_part}{frac}")
            .parse()
            .unwrap_or_else(|_| BigInt::zero());
        let scale = exp - frac.len() as i64;
        let ten = BigInt::from(10);
        let mut value = if scale >= 0 {
            BigRational::from_integer(mantissa * num::pow::pow(ten, scale as usize))
        } else {
            BigRational::new(mantissa, num::pow::pow(ten, (-scale) as usize))
        };
        // Rational literal p/q.
        if !decimal
            && !after_slash
            && self.src.get(self.pos) == Some(&b'/')
            && self
                .src
                .get(self.pos + 1)
                .is_some_and(|c| c.is_ascii_digit())
        {
            self.pos += 1;
            let den: BigInt = self.digits().parse().unwrap_or_else(|_| BigInt::zero());
            if den.is_zero() {
                return Err(ExprError::Syntax {
                    pos: start,
                    msg: "rational literal with zero denominator".into(),
                });
            }
            value /= BigRational::from_integer(den);
        }
        Ok(Tok::Num(value))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    pos: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), ExprError> {
        let (t, p) = self.lex.next()?;
        self.tok = t;
        self.pos = p;
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.tok == Tok::Caret {
            let caret_pos = self.pos;
            self.advance()?;
            match self.tok {
                Tok::Int(n) => {
                    self.advance()?;
                    Ok(Expr::pow(base, n))
                }
                Tok::Num(_) | Tok::Minus | Tok::LParen | Tok::Ident(_) => {
                    Err(ExprError::NonIntegerExponent { pos: self.pos })
                }
                _ => Err(ExprError::NonIntegerExponent { pos: caret_pos }),
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        match std::mem::replace(&mut self.tok, Tok::End) {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::constant(v))
            }
            Tok::Minus => {
                self.advance()?;
                if let Tok::Num(v) = &self.tok {
                    let v = -v.clone();
                    self.advance()?;
                    return Ok(Expr::constant(v));
                }
                let inner = self.base()?;
                Ok(Expr::unary(UnaryOp::Neg, inner))
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.advance()?;
                if self.tok == Tok::LParen {
                    if let Some(op) = UnaryOp::from_name(&name) {
                        self.advance()?;
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        return Ok(Expr::unary(op, arg));
                    }
                    if NON_SMOOTH.contains(&name.as_str()) {
                        return Err(ExprError::NonSmooth { name, pos: start });
                    }
                    return Err(ExprError::UnknownIdentifier { name, pos: start });
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expr::var(i)),
                    None => Err(ExprError::UnknownIdentifier { name, pos: start }),
                }
            }
            Tok::End => Err(ExprError::Syntax {
                pos: start,
                msg: "unexpected end of input".into(),
            }),
            other => Err(ExprError::Syntax {
                pos: start,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        if self.tok == Tok::RParen {
            self.advance()
        } else {
            Err(ExprError::Syntax {
                pos: self.pos,
                msg: "expected `)`".into(),
            })
        }
    }
}

/// Parses `text` with the variables named in `vars` (index order).
pub fn parse_expr(text: &str, vars: &[String]) -> Result<Expr, ExprError> {
    let mut p = Parser {
        lex: Lexer {
            src: text.as_bytes(),
            pos: 0,
            prev: None,
        },
        tok: Tok::End,
        pos: 0,
        vars,
    };
    p.advance()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(ExprError::Syntax {
            pos: p.pos,
            msg: format!("unexpected trailing token {:?}", p.tok),
        });
    }
    Ok(e)
}
