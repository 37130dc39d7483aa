//! A small arithmetic expression language for user-supplied fields.
//!
//! Grammar (whitespace is insignificant, no implicit multiplication):
//!
//! ```text
//! expr    := term   (('+' | '-') term)*
//! term    := unary  (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          // right associative
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! func    := 'exp' | 'ln'
//! ```
//!
//! Identifiers of the form `x<digits>` are state variables (1-based), any
//! other identifier is a parameter. A `-` applied directly to a numeric
//! literal that is not raised to a power folds into a negative constant, so
//! printing and re-parsing reproduces the same tree.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{EvalError, ParseError};

pub use crate::model_file::{parse_model_file, ModelFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
        }
    }
}

/// Expression tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// State variable, 1-based.
    Var(usize),
    Param(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// Largest state index referenced, 0 if none.
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Var(i) => *i,
            Expr::Const(_) | Expr::Param(_) => 0,
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Binary(_, a, b) => a.max_var().max(b.max_var()),
        }
    }

    /// True iff `x_i` occurs in the tree.
    pub fn contains_var(&self, i: usize) -> bool {
        match self {
            Expr::Var(j) => *j == i,
            Expr::Const(_) | Expr::Param(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.contains_var(i),
            Expr::Binary(_, a, b) => a.contains_var(i) || b.contains_var(i),
        }
    }

    /// Parameter names referenced, sorted and deduplicated.
    pub fn params(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Param(p) => out.push(p.clone()),
                Expr::Const(_) | Expr::Var(_) => {}
                Expr::Neg(a) | Expr::Call(_, a) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }

    /// Replace every parameter by its bound value.
    pub fn bind(&self, params: &BTreeMap<String, f64>) -> Result<Expr, EvalError> {
        Ok(match self {
            Expr::Param(p) => Expr::Const(
                *params
                    .get(p)
                    .ok_or_else(|| EvalError::UnboundParameter(p.clone()))?,
            ),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.bind(params)?)),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.bind(params)?)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.bind(params)?, b.bind(params)?),
        })
    }

    /// Evaluate at state `x` (`x[0]` is `x1`).
    pub fn eval(&self, x: &[f64], params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *x
                .get(i.wrapping_sub(1))
                .ok_or(EvalError::VariableOutOfRange { index: *i, dim: x.len() })?,
            Expr::Param(p) => *params
                .get(p)
                .ok_or_else(|| EvalError::UnboundParameter(p.clone()))?,
            Expr::Neg(a) => -a.eval(x, params)?,
            Expr::Call(f, a) => {
                let a = a.eval(x, params)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Ln => {
                        if a <= 0.0 {
                            return Err(EvalError::Domain(format!("ln of non-positive value {a}")));
                        }
                        a.ln()
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval(x, params)?;
                let b = b.eval(x, params)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => power(a, b)?,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Exact partial derivative with respect to `x_i`.
    pub fn differentiate(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => Expr::Const(0.0),
            Expr::Var(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(i)),
            Expr::Call(Func::Exp, a) => mul(self.clone(), a.differentiate(i)),
            Expr::Call(Func::Ln, a) => div(a.differentiate(i), (**a).clone()),
            Expr::Binary(op, a, b) => {
                let (a, b) = (&**a, &**b);
                match op {
                    BinOp::Add => add(a.differentiate(i), b.differentiate(i)),
                    BinOp::Sub => sub(a.differentiate(i), b.differentiate(i)),
                    BinOp::Mul => add(
                        mul(a.differentiate(i), b.clone()),
                        mul(a.clone(), b.differentiate(i)),
                    ),
                    BinOp::Div => {
                        // (a'b - ab') / b^2
                        let num = sub(
                            mul(a.differentiate(i), b.clone()),
                            mul(a.clone(), b.differentiate(i)),
                        );
                        div(num, pow(b.clone(), Expr::Const(2.0)))
                    }
                    BinOp::Pow if !b.contains_var(i) => {
                        let da = a.differentiate(i);
                        if is_zero(&da) {
                            return Expr::Const(0.0);
                        }
                        let lowered = match b {
                            Expr::Const(c) => Expr::Const(c - 1.0),
                            _ => sub(b.clone(), Expr::Const(1.0)),
                        };
                        mul(mul(b.clone(), pow(a.clone(), lowered)), da)
                    }
                    BinOp::Pow => {
                        // a^b (b' ln a + b a'/a)
                        let term = add(
                            mul(b.differentiate(i), Expr::Call(Func::Ln, Box::new(a.clone()))),
                            div(mul(b.clone(), a.differentiate(i)), a.clone()),
                        );
                        mul(self.clone(), term)
                    }
                }
            }
        }
    }
}

/// `a^b`: integer exponents by repeated squaring, others through `exp(b ln a)`.
fn power(a: f64, b: f64) -> Result<f64, EvalError> {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        if a == 0.0 && b < 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(a.powi(b as i32))
    } else if a > 0.0 {
        Ok((b * a.ln()).exp())
    } else {
        Err(EvalError::Domain(format!("non-integer power {b} of non-positive base {a}")))
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_zero(&a) => b,
        _ if is_zero(&b) => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ => Expr::binary(BinOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_zero(&b) => a,
        _ if is_zero(&a) => neg(b),
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ => Expr::binary(BinOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_zero(&a) || is_zero(&b) => Expr::Const(0.0),
        _ if is_one(&a) => b,
        _ if is_one(&b) => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ => Expr::binary(BinOp::Mul, a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        Expr::Const(0.0)
    } else if is_one(&b) {
        a
    } else {
        Expr::binary(BinOp::Div, a, b)
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        a
    } else {
        Expr::binary(BinOp::Pow, a, b)
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

// ---------------------------------------------------------------------------
// Printing

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => PREC_UNARY,
        Expr::Const(_) | Expr::Var(_) | Expr::Param(_) | Expr::Call(..) => PREC_ATOM,
        Expr::Neg(_) => PREC_UNARY,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::Binary(BinOp::Pow, ..) => PREC_POW,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest string that round-trips.
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Param(p) => f.write_str(p),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Neg(a) => {
                f.write_str("-")?;
                let parens = matches!(**a, Expr::Const(c) if !c.is_sign_negative())
                    || precedence(a) < PREC_UNARY;
                write_child(f, a, parens)
            }
            Expr::Binary(BinOp::Pow, a, b) => {
                write_child(f, a, precedence(a) <= PREC_POW)?;
                f.write_str("^")?;
                write_child(f, b, precedence(b) < PREC_UNARY)
            }
            Expr::Binary(op, a, b) => {
                let (p, sym) = match op {
                    BinOp::Add => (PREC_ADD, " + "),
                    BinOp::Sub => (PREC_ADD, " - "),
                    BinOp::Mul => (PREC_MUL, "*"),
                    BinOp::Div => (PREC_MUL, "/"),
                    BinOp::Pow => unreachable!(),
                };
                write_child(f, a, precedence(a) < p)?;
                f.write_str(sym)?;
                write_child(f, b, precedence(b) <= p)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&b) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let tok = match b {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Tok::Op(b as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => Tok::Num(self.number(start)?),
            b if b.is_ascii_alphabetic() || b == b'_' => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<f64, ParseError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let s = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - s
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return Err(ParseError::Syntax { offset: start, message: "malformed number".into() });
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mut p = self.pos + 1;
            if p < bytes.len() && (bytes[p] == b'+' || bytes[p] == b'-') {
                p += 1;
            }
            if digits(&mut p) == 0 {
                return Err(ParseError::Syntax {
                    offset: self.pos,
                    message: "expected exponent digits".into(),
                });
            }
            self.pos = p;
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ParseError::Syntax {
                offset: start,
                message: format!("number `{text}` is not a finite double"),
            }),
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, ParseError> {
        let found = match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        };
        Err(ParseError::Syntax { offset: self.offset(), message: format!("expected {expected}, found {found}") })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::binary(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            if let Tok::Num(v) = *self.peek() {
                if *self.peek2() != Tok::Op('^') {
                    self.bump();
                    return Ok(Expr::Const(-v));
                }
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.error("`)`");
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    let func = match name.as_str() {
                        "exp" => Func::Exp,
                        "ln" => Func::Ln,
                        _ => return Err(ParseError::UnknownFunction { name, offset }),
                    };
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return self.error("`)`");
                    }
                    self.bump();
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                Ok(identifier(&name, offset)?)
            }
            _ => self.error("a number, identifier or `(`"),
        }
    }
}

fn identifier(name: &str, offset: usize) -> Result<Expr, ParseError> {
    if let Some(digits) = name.strip_prefix('x') {
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            return match digits.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(Expr::Var(i)),
                _ => Err(ParseError::Syntax {
                    offset,
                    message: format!("state variable `{name}` must have an index >= 1"),
                }),
            };
        }
    }
    Ok(Expr::Param(name.to_string()))
}

/// Parse one expression; the whole input must be consumed.
pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::tokenize(text)?;
    let mut p = Parser { toks, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.error("an operator or end of input");
    }
    Ok(e)
}

/// Evaluate `e` at `x` with parameter bindings.
pub fn evaluate(e: &Expr, x: &[f64], params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    e.eval(x, params)
}

/// Partial derivative of `e` with respect to `x_i` (1-based).
pub fn differentiate(e: &Expr, i: usize) -> Expr {
    e.differentiate(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_params() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn ones() -> BTreeMap<String, f64> {
        [("mu_m", 1.0), ("K_m", 1.0), ("K_i", 1.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    #[test]
    fn product_with_power() {
        let e = parse_expression("x1*x2^2").unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinOp::Mul,
                Expr::Var(1),
                Expr::binary(BinOp::Pow, Expr::Var(2), Expr::Const(2.0))
            )
        );
    }

    #[test]
    fn haldane_rate_at_one() {
        let e = parse_expression("mu_m*x1/(K_m+x1+x1^2/K_i)").unwrap();
        let v = e.eval(&[1.0], &ones()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn hill_term() {
        let e = parse_expression("1/(1+x3^80)").unwrap();
        assert_eq!(e.eval(&[0.0, 0.0, 1.0], &no_params()).unwrap(), 0.5);
        let v = e.eval(&[0.0, 0.0, 1.2], &no_params()).unwrap();
        assert!(v > 0.0 && v < 1e-6);
        assert!((v - 1.0 / (1.0 + 1.2f64.powi(80))).abs() < 1e-20);
    }

    #[test]
    fn precedence_and_associativity() {
        let p = no_params();
        let ev = |s: &str| parse_expression(s).unwrap().eval(&[], &p).unwrap();
        assert_eq!(ev("2+3*4^2"), 50.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("-2^2"), -4.0);
        assert_eq!(ev("(-2)^2"), 4.0);
        assert_eq!(ev("2^-1"), 0.5);
        assert_eq!(ev("8/4/2"), 1.0);
        assert_eq!(ev("1-2-3"), -4.0);
        assert_eq!(ev(" 7 "), 7.0);
        assert_eq!(ev("1.5e1"), 15.0);
        assert!((ev("ln(exp(2))") - 2.0).abs() < 1e-15);
    }

    #[test]
    fn evaluation_errors() {
        let p = no_params();
        let e = parse_expression("x1/x2").unwrap();
        assert_eq!(e.eval(&[1.0, 0.0], &p), Err(EvalError::DivisionByZero));
        let e = parse_expression("ln(x1)").unwrap();
        assert!(matches!(e.eval(&[0.0], &p), Err(EvalError::Domain(_))));
        let e = parse_expression("x1^0.5").unwrap();
        assert!(matches!(e.eval(&[-1.0], &p), Err(EvalError::Domain(_))));
        let e = parse_expression("k9*x1").unwrap();
        assert_eq!(e.eval(&[1.0], &p), Err(EvalError::UnboundParameter("k9".into())));
        let e = parse_expression("x3").unwrap();
        assert!(matches!(e.eval(&[1.0], &p), Err(EvalError::VariableOutOfRange { .. })));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let err = parse_expression("x1 + * 2").unwrap_err();
        assert_eq!(err.offset(), 5);
        let err = parse_expression("(x1 + 2").unwrap_err();
        assert_eq!(err.offset(), 7);
        let err = parse_expression("sin(x1)").unwrap_err();
        assert_eq!(err, ParseError::UnknownFunction { name: "sin".into(), offset: 0 });
        assert!(parse_expression("2 x1").is_err());
        assert!(parse_expression("x0").is_err());
        assert!(parse_expression("1e999").is_err());
        assert!(parse_expression("3 $").is_err());
    }

    #[test]
    fn derivatives_by_hand() {
        let e = parse_expression("x1*x2^2").unwrap();
        let d = e.differentiate(2);
        assert_eq!(d.eval(&[1.0, 3.0], &no_params()).unwrap(), 6.0);

        let e = parse_expression("mu_m*x1/(K_m+x1+x1^2/K_i)").unwrap();
        // (1 - x^2) / (1 + x + x^2)^2
        let d = e.differentiate(1);
        assert!(d.eval(&[1.0], &ones()).unwrap().abs() < 1e-15);
        assert!((d.eval(&[0.5], &ones()).unwrap() - 0.75 / 3.0625).abs() < 1e-15);

        let e = parse_expression("x1*exp(x2) - ln(x1 + 1)").unwrap();
        let d3 = e.differentiate(3);
        assert_eq!(d3, Expr::Const(0.0));
    }

    #[test]
    fn general_power_derivative() {
        // d/dx1 x1^x1 = x1^x1 (ln x1 + 1)
        let e = parse_expression("x1^x1").unwrap();
        let x = 1.7f64;
        let d = e.differentiate(1).eval(&[x], &no_params()).unwrap();
        assert!((d - x.powf(x) * (x.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn printing_round_trips_structure() {
        for s in [
            "x1*x2^2",
            "-2^2",
            "(-2)^x1",
            "x1 - -2.5",
            "-(3)",
            "--2",
            "a - (b - c)",
            "a/(b*c)",
            "(a^b)^c",
            "a^b^c",
            "-x1^2",
            "(-x1)^2",
            "exp(-x1)*ln(2 + x2)",
            "x1^-(2)",
            "1e-300*x1",
        ] {
            let e = parse_expression(s).unwrap();
            let printed = e.to_string();
            let back = parse_expression(&printed).unwrap();
            assert_eq!(back, e, "{s} -> {printed}");
        }
    }
}
