//! Coefficient expression language.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | primary ('^' integer)*
//! primary:= number | 'x' digits | 'abs' '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables are one-based (`x1` is the first coordinate). First and second
//! derivatives are produced symbolically at parse time; `abs` differentiates
//! to `sign`, and evaluating `sign` exactly at zero flags a kink.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Offset applied to every coordinate when a derivative lands exactly on a kink.
pub const KINK_PERTURBATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Abs(Box<Node>),
    Sign(Box<Node>),
}

impl Node {
    fn eval(&self, x: &[f64], kink: &mut bool) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var(i) => x[*i],
            Node::Neg(a) => -a.eval(x, kink),
            Node::Add(a, b) => a.eval(x, kink) + b.eval(x, kink),
            Node::Sub(a, b) => a.eval(x, kink) - b.eval(x, kink),
            Node::Mul(a, b) => a.eval(x, kink) * b.eval(x, kink),
            Node::Div(a, b) => a.eval(x, kink) / b.eval(x, kink),
            Node::Pow(a, k) => a.eval(x, kink).powi(*k),
            Node::Abs(a) => a.eval(x, kink).abs(),
            Node::Sign(a) => {
                let v = a.eval(x, kink);
                if v == 0.0 {
                    *kink = true;
                    0.0
                } else {
                    v.signum()
                }
            }
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Abs(a) | Node::Sign(a) => a.max_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Node::Num(v) if *v == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Node::Num(v) if *v == 1.0)
    }

    fn derivative(&self, var: usize) -> Node {
        match self {
            Node::Num(_) | Node::Sign(_) => Node::Num(0.0),
            Node::Var(i) => Node::Num(if *i == var { 1.0 } else { 0.0 }),
            Node::Neg(a) => neg(a.derivative(var)),
            Node::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Node::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Node::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Node::Div(a, b) => {
                let num = sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                );
                div(num, pow((**b).clone(), 2))
            }
            Node::Pow(a, k) => {
                if *k == 0 {
                    Node::Num(0.0)
                } else {
                    mul(mul(Node::Num(*k as f64), pow((**a).clone(), k - 1)), a.derivative(var))
                }
            }
            Node::Abs(a) => mul(Node::Sign(a.clone()), a.derivative(var)),
        }
    }
}

fn neg(a: Node) -> Node {
    match a {
        Node::Num(v) => Node::Num(-v),
        Node::Neg(inner) => *inner,
        other => Node::Neg(Box::new(other)),
    }
}

fn add(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) => Node::Num(p + q),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Node::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) => Node::Num(p - q),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Node::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Node, b: Node) -> Node {
    match (&a, &b) {
        (Node::Num(p), Node::Num(q)) => Node::Num(p * q),
        _ if a.is_zero() || b.is_zero() => Node::Num(0.0),
        _ if a.is_one() => b,
        _ if b.is_one() => a,
        _ => Node::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Node, b: Node) -> Node {
    if a.is_zero() {
        return Node::Num(0.0);
    }
    if b.is_one() {
        return a;
    }
    Node::Div(Box::new(a), Box::new(b))
}

fn pow(a: Node, k: i32) -> Node {
    match (a, k) {
        (_, 0) => Node::Num(1.0),
        (a, 1) => a,
        (Node::Num(v), k) => Node::Num(v.powi(k)),
        (a, k) => Node::Pow(Box::new(a), k),
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) if *v < 0.0 => write!(f, "(-{})", -v),
            Node::Num(v) => write!(f, "{v}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, k) => write!(f, "({a})^{k}"),
            Node::Abs(a) => write!(f, "abs({a})"),
            // Only produced by differentiation; never printed from parsed input.
            Node::Sign(a) => write!(f, "({a} / abs({a}))"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected '{}'", c as char))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        let mut base = self.primary()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            base = Node::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<i32>() {
            Ok(k) => Ok(k),
            Err(_) => {
                self.pos = start;
                self.error("expected integer exponent")
            }
        }
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            None => self.error("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                if ident == "abs" {
                    self.expect(b'(')?;
                    let e = self.expr()?;
                    self.expect(b')')?;
                    return Ok(Node::Abs(Box::new(e)));
                }
                if let Some(digits) = ident.strip_prefix('x') {
                    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                        if let Ok(k) = digits.parse::<usize>() {
                            if k >= 1 {
                                return Ok(Node::Var(k - 1));
                            }
                        }
                    }
                }
                self.pos = start;
                self.error(format!("unknown identifier '{ident}'"))
            }
            Some(c) => self.error(format!("unexpected character '{}'", c as char)),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits_start = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits_start {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => Ok(Node::Num(v)),
            Err(_) => {
                self.pos = start;
                self.error(format!("malformed number '{text}'"))
            }
        }
    }
}

#[derive(Debug)]
struct Compiled {
    source: String,
    root: Node,
    gradient: Vec<Node>,
    hessian: Vec<Node>,
    arity: usize,
}

/// A parsed coefficient expression with symbolic first and second derivatives.
#[derive(Debug, Clone)]
pub struct Expr(Arc<Compiled>);

/// Parses `src` into an evaluator with derivatives.
pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let root = p.expr()?;
    if p.peek().is_some() {
        return p.error("trailing input");
    }
    let arity = root.max_var().map_or(0, |m| m + 1);
    let gradient: Vec<Node> = (0..arity).map(|i| root.derivative(i)).collect();
    let mut hessian = Vec::with_capacity(arity * arity);
    for g in &gradient {
        for j in 0..arity {
            hessian.push(g.derivative(j));
        }
    }
    Ok(Expr(Arc::new(Compiled {
        source: src.to_string(),
        root,
        gradient,
        hessian,
        arity,
    })))
}

impl Expr {
    pub fn source(&self) -> &str {
        &self.0.source
    }

    /// Number of leading coordinates the expression can reference.
    pub fn arity(&self) -> usize {
        self.0.arity
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut kink = false;
        self.0.root.eval(x, &mut kink)
    }

    /// Writes the gradient into `out` (entries beyond the arity are zero).
    /// Returns `true` when the probe sat on a kink and was perturbed.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> bool {
        let perturbed = self.with_kink_guard(x, |p, kink| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.0.gradient.get(i).map_or(0.0, |g| g.eval(p, kink));
            }
        });
        perturbed
    }

    /// Writes the Hessian (row-major, `out.len() == n*n`) into `out`.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) -> bool {
        let n = x.len();
        let a = self.0.arity;
        self.with_kink_guard(x, |p, kink| {
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = if i < a && j < a {
                        self.0.hessian[i * a + j].eval(p, kink)
                    } else {
                        0.0
                    };
                }
            }
        })
    }

    fn with_kink_guard(&self, x: &[f64], mut f: impl FnMut(&[f64], &mut bool)) -> bool {
        let mut kink = false;
        f(x, &mut kink);
        if !kink {
            return false;
        }
        let shifted: Vec<f64> = x.iter().map(|v| v + KINK_PERTURBATION).collect();
        log::warn!(
            "derivative of '{}' requested on a kink at {:?}; perturbed by {KINK_PERTURBATION:e}",
            self.0.source,
            x
        );
        let mut again = false;
        f(&shifted, &mut again);
        true
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.root)
    }
}
