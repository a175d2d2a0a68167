//! Scalar expression language used to define Lagrangians, dynamics,
//! Hamiltonians and symmetry generators.
//!
//! Expressions are immutable trees over named variables (`t`, `q0..`,
//! `v0..`, `u0..`, `p0..`) with the usual arithmetic operators and a small
//! set of unary functions. Construction goes through smart constructors
//! that fold literal subtrees; beyond that no algebraic simplification is
//! attempted — correctness downstream is numerical, not cosmetic.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unknown variable `{name}` at offset {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Abs,
}

impl UnaryFn {
    fn name(self) -> &'static str {
        match self {
            UnaryFn::Neg => "neg",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Ln => "ln",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<UnaryFn> {
        Some(match name {
            "neg" => UnaryFn::Neg,
            "sin" => UnaryFn::Sin,
            "cos" => UnaryFn::Cos,
            "exp" => UnaryFn::Exp,
            "ln" => UnaryFn::Ln,
            "sqrt" => UnaryFn::Sqrt,
            "abs" => UnaryFn::Abs,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        let y = match self {
            UnaryFn::Neg => -x,
            UnaryFn::Sin => x.sin(),
            UnaryFn::Cos => x.cos(),
            UnaryFn::Exp => x.exp(),
            UnaryFn::Ln => {
                if x <= 0.0 {
                    return Err(ExprError::Domain(format!("ln of non-positive value {x}")));
                }
                x.ln()
            }
            UnaryFn::Sqrt => {
                if x < 0.0 {
                    return Err(ExprError::Domain(format!("sqrt of negative value {x}")));
                }
                x.sqrt()
            }
            UnaryFn::Abs => x.abs(),
        };
        finite(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn apply(self, l: f64, r: f64) -> Result<f64, ExprError> {
        let y = match self {
            BinOp::Add => l + r,
            BinOp::Sub => l - r,
            BinOp::Mul => l * r,
            BinOp::Div => {
                if r == 0.0 {
                    return Err(ExprError::Domain("division by zero".into()));
                }
                l / r
            }
            BinOp::Pow => {
                if l < 0.0 && r.fract() != 0.0 {
                    return Err(ExprError::Domain(format!(
                        "negative base {l} raised to non-integer exponent {r}"
                    )));
                }
                if l == 0.0 && r < 0.0 {
                    return Err(ExprError::Domain("zero raised to negative exponent".into()));
                }
                l.powf(r)
            }
        };
        finite(y)
    }
}

fn finite(y: f64) -> Result<f64, ExprError> {
    if y.is_finite() {
        Ok(y)
    } else {
        Err(ExprError::Domain(format!("non-finite result {y}")))
    }
}

/// Variable bindings for [`Expr::eval`]. Reusable across evaluations.
#[derive(Debug, Default, Clone)]
pub struct Env {
    vars: HashMap<String, f64>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(slot) = self.vars.get_mut(name) {
            *slot = value;
        } else {
            self.vars.insert(name.to_string(), value);
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.vars.get(name).copied()
    }
}

/// A parsed scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Unary(UnaryFn, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn unary(f: UnaryFn, e: Expr) -> Expr {
        if f == UnaryFn::Neg {
            return Expr::neg(e);
        }
        if let Expr::Const(c) = e {
            if let Ok(v) = f.apply(c) {
                return Expr::Const(v);
            }
        }
        Expr::Unary(f, Box::new(e))
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Unary(UnaryFn::Neg, inner) => *inner,
            other => Expr::Unary(UnaryFn::Neg, Box::new(other)),
        }
    }

    pub fn add(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::Add, l, r)
    }

    pub fn sub(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::Sub, l, r)
    }

    pub fn mul(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::Mul, l, r)
    }

    pub fn div(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::Div, l, r)
    }

    pub fn pow(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinOp::Pow, l, r)
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        if let (Expr::Const(a), Expr::Const(b)) = (&l, &r) {
            if let Ok(v) = op.apply(*a, *b) {
                return Expr::Const(v);
            }
        }
        match (op, &l, &r) {
            (BinOp::Add, Expr::Const(c), _) if *c == 0.0 => return r,
            (BinOp::Add, _, Expr::Const(c)) if *c == 0.0 => return l,
            (BinOp::Sub, _, Expr::Const(c)) if *c == 0.0 => return l,
            (BinOp::Sub, Expr::Const(c), _) if *c == 0.0 => return Expr::neg(r),
            (BinOp::Mul, Expr::Const(c), _) if *c == 0.0 => return Expr::Const(0.0),
            (BinOp::Mul, _, Expr::Const(c)) if *c == 0.0 => return Expr::Const(0.0),
            (BinOp::Mul, Expr::Const(c), _) if *c == 1.0 => return r,
            (BinOp::Mul, _, Expr::Const(c)) if *c == 1.0 => return l,
            (BinOp::Div, _, Expr::Const(c)) if *c == 1.0 => return l,
            (BinOp::Pow, _, Expr::Const(c)) if *c == 1.0 => return l,
            (BinOp::Pow, _, Expr::Const(c)) if *c == 0.0 => return Expr::Const(1.0),
            _ => {}
        }
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Parses an infix expression. Any identifier is accepted as a variable.
    pub fn parse(source: &str) -> Result<Expr, ExprError> {
        Parser::new(source, None).parse()
    }

    /// Parses an infix expression, rejecting variables outside `declared`.
    pub fn parse_with_vars(source: &str, declared: &HashSet<String>) -> Result<Expr, ExprError> {
        Parser::new(source, Some(declared)).parse()
    }

    pub fn eval(&self, env: &Env) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => env.get(name).ok_or_else(|| ExprError::Unbound(name.clone())),
            Expr::Unary(f, e) => f.apply(e.eval(env)?),
            Expr::Binary(op, l, r) => op.apply(l.eval(env)?, r.eval(env)?),
        }
    }

    /// Fast-path evaluation for expressions over a single variable.
    pub fn eval_single(&self, var: &str, x: f64) -> Result<f64, ExprError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(name) => {
                if name == var {
                    Ok(x)
                } else {
                    Err(ExprError::Unbound(name.clone()))
                }
            }
            Expr::Unary(f, e) => f.apply(e.eval_single(var, x)?),
            Expr::Binary(op, l, r) => op.apply(l.eval_single(var, x)?, r.eval_single(var, x)?),
        }
    }

    /// Exact symbolic partial derivative with respect to `var`.
    pub fn diff(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(name) => {
                if name == var {
                    Expr::Const(1.0)
                } else {
                    Expr::Const(0.0)
                }
            }
            Expr::Unary(f, e) => {
                let de = e.diff(var);
                let e = (**e).clone();
                match f {
                    UnaryFn::Neg => Expr::neg(de),
                    UnaryFn::Sin => Expr::mul(Expr::unary(UnaryFn::Cos, e), de),
                    UnaryFn::Cos => Expr::neg(Expr::mul(Expr::unary(UnaryFn::Sin, e), de)),
                    UnaryFn::Exp => Expr::mul(Expr::unary(UnaryFn::Exp, e), de),
                    UnaryFn::Ln => Expr::div(de, e),
                    UnaryFn::Sqrt => Expr::div(
                        de,
                        Expr::mul(Expr::Const(2.0), Expr::unary(UnaryFn::Sqrt, e)),
                    ),
                    // d|e| = e/|e| * de
                    UnaryFn::Abs => Expr::mul(
                        Expr::div(e.clone(), Expr::unary(UnaryFn::Abs, e)),
                        de,
                    ),
                }
            }
            Expr::Binary(op, l, r) => {
                let dl = l.diff(var);
                let dr = r.diff(var);
                let (l, r) = ((**l).clone(), (**r).clone());
                match op {
                    BinOp::Add => Expr::add(dl, dr),
                    BinOp::Sub => Expr::sub(dl, dr),
                    BinOp::Mul => Expr::add(Expr::mul(dl, r), Expr::mul(l, dr)),
                    BinOp::Div => Expr::div(
                        Expr::sub(Expr::mul(dl, r.clone()), Expr::mul(l, dr)),
                        Expr::pow(r, Expr::Const(2.0)),
                    ),
                    BinOp::Pow => match r {
                        Expr::Const(c) => Expr::mul(
                            Expr::mul(
                                Expr::Const(c),
                                Expr::pow(l, Expr::Const(c - 1.0)),
                            ),
                            dl,
                        ),
                        r => {
                            // f^g * (g' ln f + g f'/f)
                            let term = Expr::add(
                                Expr::mul(dr, Expr::unary(UnaryFn::Ln, l.clone())),
                                Expr::mul(r.clone(), Expr::div(dl, l.clone())),
                            );
                            Expr::mul(Expr::pow(l, r), term)
                        }
                    },
                }
            }
        }
    }

    /// Names of all variables occurring in the expression.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => {
                out.insert(name.as_str());
            }
            Expr::Unary(_, e) => e.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// True when constant folding collapsed the expression to literal zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Unary(UnaryFn::Neg, e) => write!(f, "(-{e})"),
            Expr::Unary(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    declared: Option<&'a HashSet<String>>,
}

impl<'a> Parser<'a> {
    fn new(source: &'a str, declared: Option<&'a HashSet<String>>) -> Parser<'a> {
        Parser {
            src: source.as_bytes(),
            pos: 0,
            declared,
        }
    }

    fn parse(mut self) -> Result<Expr, ExprError> {
        let e = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.syntax("unexpected trailing input"));
        }
        Ok(e)
    }

    fn syntax(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
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

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Expr::add(acc, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Expr::sub(acc, self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = Expr::mul(acc, self.unary()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = Expr::div(acc, self.unary()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    // unary := '-' unary | power     (pow binds tighter than unary minus)
    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    // power := atom ('^' unary)?     (right-associative)
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.syntax("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => Err(self.syntax(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // optional exponent part
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mut probe = self.pos + 1;
            if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                probe += 1;
            }
            if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Const(v)),
            _ => Err(ExprError::Syntax {
                offset: start,
                message: format!("invalid number literal `{text}`"),
            }),
        }
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if self.peek() == Some(b'(') {
            let func = UnaryFn::from_name(&name).ok_or(ExprError::UnknownFunction {
                name: name.clone(),
                offset: start,
            })?;
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.syntax("expected `)`"));
            }
            self.pos += 1;
            return Ok(Expr::unary(func, arg));
        }
        if let Some(declared) = self.declared {
            if !declared.contains(&name) {
                return Err(ExprError::UnknownVariable {
                    name,
                    offset: start,
                });
            }
        }
        Ok(Expr::Var(name))
    }
}

/// Declared variable set for a variational problem with `n` components:
/// `t`, `q0..q{n-1}`, `v0..v{n-1}`.
pub fn variational_vars(n: usize) -> HashSet<String> {
    let mut set = HashSet::new();
    set.insert("t".to_string());
    for c in 0..n {
        set.insert(format!("q{c}"));
        set.insert(format!("v{c}"));
    }
    set
}

/// Declared variable set for a control problem: `t`, `q0..`, `u0..`, `p0..`.
pub fn control_vars(n: usize, m: usize) -> HashSet<String> {
    let mut set = HashSet::new();
    set.insert("t".to_string());
    for c in 0..n {
        set.insert(format!("q{c}"));
        set.insert(format!("p{c}"));
    }
    for e in 0..m {
        set.insert(format!("u{e}"));
    }
    set
}
