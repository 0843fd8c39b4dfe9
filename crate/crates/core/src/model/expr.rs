//! Scalar expression trees used to describe payoff functions.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' UINT)?
//! atom   := NUMBER | VAR | '(' expr ')'
//!         | 'min' '(' expr ',' expr ')' | 'max' '(' expr ',' expr ')'
//!         | 'abs' '(' expr ')' | 'clamp' '(' expr ',' NUMBER ',' NUMBER ')'
//! VAR    := 'x' | 'x1' .. 'x9'          ('x' is 'x1')
//! ```
//!
//! A leading minus in front of a number literal folds into the constant;
//! in front of anything else it becomes `0 - e`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index: `Var(0)` is `x1`.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Clamp(Box<Expr>, f64, f64),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn x() -> Expr {
        Expr::Var(0)
    }

    /// Evaluates at `vars`. Missing variables read as zero.
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => vars.get(*i).copied().unwrap_or(0.0),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Pow(a, n) => a.eval(vars).powi(*n as i32),
            Expr::Min(a, b) => a.eval(vars).min(b.eval(vars)),
            Expr::Max(a, b) => a.eval(vars).max(b.eval(vars)),
            Expr::Abs(a) => a.eval(vars).abs(),
            Expr::Clamp(a, lo, hi) => a.eval(vars).max(*lo).min(*hi),
        }
    }

    pub fn eval1(&self, x: f64) -> f64 {
        self.eval(std::slice::from_ref(&x))
    }

    /// Number of variables referenced, i.e. one past the largest index.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.arity().max(b.arity())
            }
            Expr::Pow(a, _) | Expr::Abs(a) | Expr::Clamp(a, _, _) => a.arity(),
        }
    }

    /// Replaces every `x1` with `inner`.
    pub fn compose(&self, inner: &Expr) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(0) => inner.clone(),
            Expr::Var(i) => Expr::Var(*i),
            Expr::Add(a, b) => Expr::Add(Box::new(a.compose(inner)), Box::new(b.compose(inner))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.compose(inner)), Box::new(b.compose(inner))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.compose(inner)), Box::new(b.compose(inner))),
            Expr::Min(a, b) => Expr::Min(Box::new(a.compose(inner)), Box::new(b.compose(inner))),
            Expr::Max(a, b) => Expr::Max(Box::new(a.compose(inner)), Box::new(b.compose(inner))),
            Expr::Pow(a, n) => Expr::Pow(Box::new(a.compose(inner)), *n),
            Expr::Abs(a) => Expr::Abs(Box::new(a.compose(inner))),
            Expr::Clamp(a, lo, hi) => Expr::Clamp(Box::new(a.compose(inner)), *lo, *hi),
        }
    }

    pub fn scale(self, factor: f64) -> Expr {
        Expr::Mul(Box::new(Expr::Const(factor)), Box::new(self))
    }

    pub fn add(self, other: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(other))
    }

    pub fn max(self, other: Expr) -> Expr {
        Expr::Max(Box::new(self), Box::new(other))
    }

    /// `1{e > level}`, as a steep clamp.
    pub fn exceeds(self, level: f64) -> Expr {
        let shifted = Expr::Sub(Box::new(self), Box::new(Expr::Const(level)));
        Expr::Clamp(Box::new(shifted.scale(INDICATOR_SLOPE)), 0.0, 1.0)
    }

    /// `1{e < level}`.
    pub fn below(self, level: f64) -> Expr {
        let shifted = Expr::Sub(Box::new(Expr::Const(level)), Box::new(self));
        Expr::Clamp(Box::new(shifted.scale(INDICATOR_SLOPE)), 0.0, 1.0)
    }
}

/// Slope of the clamp ramp used to build event indicators. Values within
/// `1 / INDICATOR_SLOPE` of the threshold land on the ramp.
pub const INDICATOR_SLOPE: f64 = 1e12;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(a, n) => write!(f, "{}^{n}", Paren(a)),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Abs(a) => write!(f, "abs({a})"),
            Expr::Clamp(a, lo, hi) => write!(f, "clamp({a}, {lo:?}, {hi:?})"),
        }
    }
}

// Wraps constants and powers so `^` binds to the intended base.
struct Paren<'a>(&'a Expr);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Expr::Const(_) | Expr::Pow(..) => write!(f, "({})", self.0),
            e => write!(f, "{e}"),
        }
    }
}

impl FromStr for Expr {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.eat('*') {
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            self.skip_ws();
            if self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                let value = self.number()?;
                let e = Expr::Const(-value);
                return self.power_suffix(e);
            }
            let inner = self.unary()?;
            return Ok(Expr::Sub(Box::new(Expr::Const(0.0)), Box::new(inner)));
        }
        let atom = self.atom()?;
        self.power_suffix(atom)
    }

    fn power_suffix(&mut self, base: Expr) -> Result<Expr> {
        if self.eat('^') {
            self.skip_ws();
            let start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            let n: u32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| self.err("expected a nonnegative integer exponent"))?;
            Ok(Expr::Pow(Box::new(base), n))
        } else {
            Ok(base)
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && (bytes[self.pos] == b'+' || bytes[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let v: f64 = text.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("bad number '{text}'"),
        })?;
        if !v.is_finite() {
            return Err(self.err("number out of range"));
        }
        Ok(v)
    }

    fn signed_number(&mut self) -> Result<f64> {
        if self.eat('-') {
            Ok(-self.number()?)
        } else {
            self.number()
        }
    }

    fn ident(&mut self) -> &str {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(Expr::Const(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let name = self.ident().to_string();
                match name.as_str() {
                    "x" => Ok(Expr::Var(0)),
                    "min" | "max" => {
                        self.expect('(')?;
                        let a = self.expr()?;
                        self.expect(',')?;
                        let b = self.expr()?;
                        self.expect(')')?;
                        Ok(if name == "min" {
                            Expr::Min(Box::new(a), Box::new(b))
                        } else {
                            Expr::Max(Box::new(a), Box::new(b))
                        })
                    }
                    "abs" => {
                        self.expect('(')?;
                        let a = self.expr()?;
                        self.expect(')')?;
                        Ok(Expr::Abs(Box::new(a)))
                    }
                    "clamp" => {
                        self.expect('(')?;
                        let a = self.expr()?;
                        self.expect(',')?;
                        let lo = self.signed_number()?;
                        self.expect(',')?;
                        let hi = self.signed_number()?;
                        self.expect(')')?;
                        if lo > hi {
                            return Err(self.err("clamp requires lo <= hi"));
                        }
                        Ok(Expr::Clamp(Box::new(a), lo, hi))
                    }
                    v if v.len() == 2 && v.starts_with('x') => match v.as_bytes()[1] {
                        d @ b'1'..=b'9' => Ok(Expr::Var((d - b'1') as usize)),
                        _ => Err(Error::Parse {
                            offset: start,
                            message: format!("unknown identifier '{name}'"),
                        }),
                    },
                    _ => Err(Error::Parse {
                        offset: start,
                        message: format!("unknown identifier '{name}'"),
                    }),
                }
            }
            Some(c) => Err(self.err(&format!("unexpected character '{c}'"))),
        }
    }
}
