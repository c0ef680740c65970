//! Expression language for level sets and integrands.
//!
//! Expressions are compiled into a flat instruction tape and evaluated with
//! plain floats, first-order duals or second-order duals.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    PowI(usize, i32),
    Sin(usize),
    Cos(usize),
    Sqrt(usize),
    Abs(usize),
    Exp(usize),
}

/// A compiled expression in the variables `x`, `y`, `z`.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    tape: Vec<Op>,
}

/// Scalar types the tape can be evaluated with.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn variable(value: f64, index: usize) -> Self;
    fn value(&self) -> f64;
    /// Applies a unary function given its value and first two derivatives at `self.value()`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn variable(value: f64, _index: usize) -> Self {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn chain(self, f0: f64, _f1: f64, _f2: f64) -> Self {
        f0
    }
}

/// Product in which an exact zero derivative stays zero, so a variable the
/// argument does not depend on keeps a zero partial where `f'` is infinite.
fn mul0(f: f64, t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        f * t
    }
}

/// Value and gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual1 {
    pub v: f64,
    pub g: [f64; 3],
}

impl Scalar for Dual1 {
    fn constant(c: f64) -> Self {
        Dual1 { v: c, g: [0.0; 3] }
    }
    fn variable(value: f64, index: usize) -> Self {
        let mut g = [0.0; 3];
        g[index] = 1.0;
        Dual1 { v: value, g }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn chain(self, f0: f64, f1: f64, _f2: f64) -> Self {
        Dual1 {
            v: f0,
            g: self.g.map(|gi| mul0(f1, gi)),
        }
    }
}

impl Add for Dual1 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual1 {
            v: self.v + o.v,
            g: std::array::from_fn(|i| self.g[i] + o.g[i]),
        }
    }
}

impl Sub for Dual1 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual1 {
            v: self.v - o.v,
            g: std::array::from_fn(|i| self.g[i] - o.g[i]),
        }
    }
}

impl Mul for Dual1 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual1 {
            v: self.v * o.v,
            g: std::array::from_fn(|i| self.v * o.g[i] + o.v * self.g[i]),
        }
    }
}

impl Neg for Dual1 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual1 {
            v: -self.v,
            g: self.g.map(|gi| -gi),
        }
    }
}

/// Value, gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
}

impl Scalar for Dual2 {
    fn constant(c: f64) -> Self {
        Dual2 {
            v: c,
            g: [0.0; 3],
            h: [[0.0; 3]; 3],
        }
    }
    fn variable(value: f64, index: usize) -> Self {
        let mut g = [0.0; 3];
        g[index] = 1.0;
        Dual2 {
            v: value,
            g,
            h: [[0.0; 3]; 3],
        }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Dual2 {
            v: f0,
            g: self.g.map(|gi| mul0(f1, gi)),
            h: std::array::from_fn(|i| {
                std::array::from_fn(|j| mul0(f1, self.h[i][j]) + mul0(f2, mul0(self.g[i], self.g[j])))
            }),
        }
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual2 {
            v: self.v + o.v,
            g: std::array::from_fn(|i| self.g[i] + o.g[i]),
            h: std::array::from_fn(|i| std::array::from_fn(|j| self.h[i][j] + o.h[i][j])),
        }
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual2 {
            v: self.v - o.v,
            g: std::array::from_fn(|i| self.g[i] - o.g[i]),
            h: std::array::from_fn(|i| std::array::from_fn(|j| self.h[i][j] - o.h[i][j])),
        }
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual2 {
            v: self.v * o.v,
            g: std::array::from_fn(|i| self.v * o.g[i] + o.v * self.g[i]),
            h: std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    self.v * o.h[i][j]
                        + o.v * self.h[i][j]
                        + self.g[i] * o.g[j]
                        + self.g[j] * o.g[i]
                })
            }),
        }
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual2 {
            v: -self.v,
            g: self.g.map(|gi| -gi),
            h: self.h.map(|row| row.map(|hij| -hij)),
        }
    }
}

fn recip<S: Scalar>(a: S) -> S {
    let v = a.value();
    a.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        let mut parser = Parser {
            chars: source.chars().collect(),
            pos: 0,
            tape: Vec::new(),
        };
        parser.skip_ws();
        let root = parser.expr()?;
        parser.skip_ws();
        if parser.pos < parser.chars.len() {
            return Err(parser.error(format!(
                "unexpected character '{}'",
                parser.chars[parser.pos]
            )));
        }
        debug_assert_eq!(root + 1, parser.tape.len());
        Ok(Expr {
            source: source.to_string(),
            tape: parser.tape,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True if the expression does not reference any variable.
    pub fn is_constant(&self) -> bool {
        !self.tape.iter().any(|op| matches!(op, Op::Var(_)))
    }

    pub fn eval_with<S: Scalar>(&self, x: &[f64; 3]) -> S {
        let mut slots: Vec<S> = Vec::with_capacity(self.tape.len());
        for op in &self.tape {
            let r = match *op {
                Op::Const(c) => S::constant(c),
                Op::Var(k) => S::variable(x[k], k),
                Op::Add(a, b) => slots[a] + slots[b],
                Op::Sub(a, b) => slots[a] - slots[b],
                Op::Mul(a, b) => slots[a] * slots[b],
                Op::Div(a, b) => slots[a] * recip(slots[b]),
                Op::Neg(a) => -slots[a],
                Op::PowI(a, n) => {
                    let v = slots[a].value();
                    let nf = n as f64;
                    slots[a].chain(
                        v.powi(n),
                        nf * v.powi(n - 1),
                        nf * (nf - 1.0) * v.powi(n - 2),
                    )
                }
                Op::Sin(a) => {
                    let (s, c) = slots[a].value().sin_cos();
                    slots[a].chain(s, c, -s)
                }
                Op::Cos(a) => {
                    let (s, c) = slots[a].value().sin_cos();
                    slots[a].chain(c, -s, -c)
                }
                Op::Sqrt(a) => {
                    let r = slots[a].value().sqrt();
                    slots[a].chain(r, 0.5 / r, -0.25 / (r * r * r))
                }
                Op::Abs(a) => {
                    let v = slots[a].value();
                    let s = if v < 0.0 { -1.0 } else { 1.0 };
                    slots[a].chain(v.abs(), s, 0.0)
                }
                Op::Exp(a) => {
                    let e = slots[a].value().exp();
                    slots[a].chain(e, e, e)
                }
            };
            slots.push(r);
        }
        *slots.last().expect("non-empty tape")
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        self.eval_with::<f64>(x)
    }

    pub fn eval_gradient(&self, x: &[f64; 3]) -> Dual1 {
        self.eval_with::<Dual1>(x)
    }

    pub fn eval_hessian(&self, x: &[f64; 3]) -> Dual2 {
        self.eval_with::<Dual2>(x)
    }
}

impl std::fmt::Display for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    tape: Vec<Op>,
}

impl Parser {
    fn error(&self, message: String) -> Error {
        let mut line = 1;
        let mut column = 1;
        for &c in &self.chars[..self.pos.min(self.chars.len())] {
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
        }
        Error::Parse {
            line,
            column,
            message,
        }
    }

    fn push(&mut self, op: Op) -> usize {
        self.tape.push(op);
        self.tape.len() - 1
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<usize> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                let rhs = self.term()?;
                lhs = self.push(Op::Add(lhs, rhs));
            } else if self.eat('-') {
                let rhs = self.term()?;
                lhs = self.push(Op::Sub(lhs, rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<usize> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                let rhs = self.unary()?;
                lhs = self.push(Op::Mul(lhs, rhs));
            } else if self.eat('/') {
                let rhs = self.unary()?;
                lhs = self.push(Op::Div(lhs, rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<usize> {
        if self.eat('-') {
            let a = self.unary()?;
            Ok(self.push(Op::Neg(a)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<usize> {
        let base = self.primary()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let at = self.pos;
        let mark = self.tape.len();
        let exponent = self.unary()?;
        let sub = Expr {
            source: String::new(),
            tape: self.tape[mark..=exponent]
                .iter()
                .map(|op| shift(*op, mark))
                .collect(),
        };
        if !sub.is_constant() {
            self.pos = at;
            return Err(self.error("exponent must be a constant integer".into()));
        }
        let value = sub.eval(&[0.0; 3]);
        if value.fract() != 0.0 || value.abs() > 1024.0 {
            self.pos = at;
            return Err(self.error(format!("exponent {value} is not a small integer")));
        }
        self.tape.truncate(mark);
        Ok(self.push(Op::PowI(base, value as i32)))
    }

    fn primary(&mut self) -> Result<usize> {
        match self.peek() {
            Some('(') => {
                self.eat('(');
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'".into()));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.error(format!("unexpected character '{c}'"))),
            None => Err(self.error("unexpected end of expression".into())),
        }
    }

    fn number(&mut self) -> Result<usize> {
        let start = self.pos;
        let digits = |p: &mut Parser| {
            while p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.pos += 1;
            }
        };
        digits(self);
        if self.peek() == Some('.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        let value: f64 = text.parse().map_err(|_| {
            let mut e = self.error(format!("invalid number '{text}'"));
            if let Error::Parse { column, .. } = &mut e {
                *column -= self.pos - start;
            }
            e
        })?;
        self.skip_ws();
        Ok(self.push(Op::Const(value)))
    }

    fn identifier(&mut self) -> Result<usize> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        self.skip_ws();
        let var = match name.as_str() {
            "x" => Some(0),
            "y" => Some(1),
            "z" => Some(2),
            _ => None,
        };
        if let Some(k) = var {
            return Ok(self.push(Op::Var(k)));
        }
        if name == "pi" {
            return Ok(self.push(Op::Const(std::f64::consts::PI)));
        }
        let func: fn(usize) -> Op = match name.as_str() {
            "sin" => Op::Sin,
            "cos" => Op::Cos,
            "sqrt" => Op::Sqrt,
            "abs" => Op::Abs,
            "exp" => Op::Exp,
            _ => {
                self.pos = start;
                return Err(self.error(format!("unknown identifier '{name}'")));
            }
        };
        if !self.eat('(') {
            return Err(self.error(format!("expected '(' after '{name}'")));
        }
        let arg = self.expr()?;
        if !self.eat(')') {
            return Err(self.error("expected ')'".into()));
        }
        Ok(self.push(func(arg)))
    }
}

fn shift(op: Op, by: usize) -> Op {
    match op {
        Op::Const(c) => Op::Const(c),
        Op::Var(k) => Op::Var(k),
        Op::Add(a, b) => Op::Add(a - by, b - by),
        Op::Sub(a, b) => Op::Sub(a - by, b - by),
        Op::Mul(a, b) => Op::Mul(a - by, b - by),
        Op::Div(a, b) => Op::Div(a - by, b - by),
        Op::Neg(a) => Op::Neg(a - by),
        Op::PowI(a, n) => Op::PowI(a - by, n),
        Op::Sin(a) => Op::Sin(a - by),
        Op::Cos(a) => Op::Cos(a - by),
        Op::Sqrt(a) => Op::Sqrt(a - by),
        Op::Abs(a) => Op::Abs(a - by),
        Op::Exp(a) => Op::Exp(a - by),
    }
}
