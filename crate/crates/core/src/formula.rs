//! Predictor formulas: a small infix expression language over constants,
//! covariates and parameters, evaluated with exact first and second
//! derivatives in the parameters by forward-over-forward propagation.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          right associative
//! atom  := number | name | func '(' expr ')' | '(' expr ')'
//! func  := exp | log | sqrt
//! ```

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const FUNCTIONS: [&str; 3] = ["exp", "log", "sqrt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Cov(usize),
    Param(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
struct Expr {
    node: Node,
    start: usize,
    end: usize,
}

/// How a subexpression depends on the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Free,
    Affine,
    Curved,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Cov(usize),
    Param(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
}

#[derive(Debug, Clone)]
struct Instr {
    op: Op,
    class: Class,
    start: usize,
    end: usize,
}

/// Value, gradient and Hessian of a predictor at one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivBundle {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DerivOrder {
    Value,
    First,
    Second,
}

/// A parsed, immutable predictor formula.
#[derive(Debug, Clone)]
pub struct Formula {
    source: String,
    params: Vec<String>,
    covs: Vec<String>,
    ast: Expr,
    tape: Vec<Instr>,
    linear: bool,
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
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

fn lex(src: &str) -> Result<Vec<(Tok, usize, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, start, start + 1));
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((Tok::Num(value), start, i));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start, i));
        } else {
            let ch = src[start..].chars().next().unwrap_or('?');
            return Err(Error::Syntax {
                offset: start,
                message: format!("unexpected character '{ch}'"),
            });
        }
    }
    out.push((Tok::End, src.len(), src.len()));
    Ok(out)
}

// --------------------------------------------------------------- parsing

struct Parser<'a> {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    params: &'a [String],
    covs: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> Error {
        let message = match self.peek() {
            Tok::End => "unexpected end of formula".to_string(),
            Tok::Num(v) => format!("unexpected number {v}"),
            Tok::Ident(s) => format!("unexpected name '{s}'"),
            t => format!("unexpected '{}'", tok_text(t)),
        };
        Error::Syntax {
            offset: self.offset(),
            message,
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            let (_, start, _) = self.bump();
            let inner = self.unary()?;
            let end = inner.end;
            return Ok(Expr {
                node: Node::Neg(Box::new(inner)),
                start,
                end,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                let (_, start, end) = self.bump();
                Ok(Expr {
                    node: Node::Const(v),
                    start,
                    end,
                })
            }
            Tok::LParen => {
                let (_, start, _) = self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected());
                }
                let (_, _, end) = self.bump();
                Ok(Expr { start, end, ..inner })
            }
            Tok::Ident(name) => {
                let (_, start, end) = self.bump();
                if let Some(func) = function(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(Error::Syntax {
                            offset: self.offset(),
                            message: format!("expected '(' after '{name}'"),
                        });
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.unexpected());
                    }
                    let (_, _, end) = self.bump();
                    return Ok(Expr {
                        node: Node::Call(func, Box::new(arg)),
                        start,
                        end,
                    });
                }
                let node = if let Some(k) = self.params.iter().position(|p| *p == name) {
                    Node::Param(k)
                } else if let Some(j) = self.covs.iter().position(|c| *c == name) {
                    Node::Cov(j)
                } else {
                    return Err(Error::UnknownIdentifier(name));
                };
                Ok(Expr { node, start, end })
            }
            _ => Err(self.unexpected()),
        }
    }
}

fn tok_text(t: &Tok) -> &'static str {
    match t {
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Star => "*",
        Tok::Slash => "/",
        Tok::Caret => "^",
        Tok::LParen => "(",
        Tok::RParen => ")",
        _ => "",
    }
}

fn function(name: &str) -> Option<Func> {
    match name {
        "exp" => Some(Func::Exp),
        "log" => Some(Func::Log),
        "sqrt" => Some(Func::Sqrt),
        _ => None,
    }
}

fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    let (start, end) = (lhs.start, rhs.end);
    Expr {
        node: Node::Binary(op, Box::new(lhs), Box::new(rhs)),
        start,
        end,
    }
}

// ------------------------------------------------------------- compiling

fn compile(e: &Expr, tape: &mut Vec<Instr>, used: &mut [bool]) -> usize {
    let (op, class) = match &e.node {
        Node::Const(v) => (Op::Const(*v), Class::Free),
        Node::Cov(j) => (Op::Cov(*j), Class::Free),
        Node::Param(k) => {
            used[*k] = true;
            (Op::Param(*k), Class::Affine)
        }
        Node::Neg(a) => {
            let a = compile(a, tape, used);
            (Op::Neg(a), tape[a].class)
        }
        Node::Call(f, a) => {
            let a = compile(a, tape, used);
            let class = if tape[a].class == Class::Free {
                Class::Free
            } else {
                Class::Curved
            };
            let op = match f {
                Func::Exp => Op::Exp(a),
                Func::Log => Op::Log(a),
                Func::Sqrt => Op::Sqrt(a),
            };
            (op, class)
        }
        Node::Binary(op, a, b) => {
            let a = compile(a, tape, used);
            let b = compile(b, tape, used);
            let (ca, cb) = (tape[a].class, tape[b].class);
            match op {
                BinOp::Add => (Op::Add(a, b), ca.max(cb)),
                BinOp::Sub => (Op::Sub(a, b), ca.max(cb)),
                BinOp::Mul => {
                    let class = if ca == Class::Free {
                        cb
                    } else if cb == Class::Free {
                        ca
                    } else {
                        Class::Curved
                    };
                    (Op::Mul(a, b), class)
                }
                BinOp::Div => {
                    let class = if cb == Class::Free { ca } else { Class::Curved };
                    (Op::Div(a, b), class)
                }
                BinOp::Pow => {
                    let class = if ca == Class::Free && cb == Class::Free {
                        Class::Free
                    } else {
                        Class::Curved
                    };
                    (Op::Pow(a, b), class)
                }
            }
        }
    };
    tape.push(Instr {
        op,
        class,
        start: e.start,
        end: e.end,
    });
    tape.len() - 1
}

fn check_names(params: &[String], covs: &[String]) -> Result<()> {
    let all = params.iter().chain(covs.iter());
    for (i, name) in all.clone().enumerate() {
        let valid = name
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            return Err(Error::InvalidModel(format!("'{name}' is not a valid name")));
        }
        if FUNCTIONS.contains(&name.as_str()) {
            return Err(Error::InvalidModel(format!("'{name}' is a reserved function name")));
        }
        if all.clone().skip(i + 1).any(|other| other == name) {
            return Err(Error::InvalidModel(format!("name '{name}' is declared twice")));
        }
    }
    Ok(())
}

impl Formula {
    /// Parse `src` over the declared parameter and covariate names. Every
    /// declared parameter must appear in the formula.
    pub fn parse<P: AsRef<str>, C: AsRef<str>>(src: &str, params: &[P], covs: &[C]) -> Result<Self> {
        let params: Vec<String> = params.iter().map(|p| p.as_ref().to_string()).collect();
        let covs: Vec<String> = covs.iter().map(|c| c.as_ref().to_string()).collect();
        check_names(&params, &covs)?;
        if src.trim().is_empty() {
            return Err(Error::Syntax {
                offset: 0,
                message: "empty formula".into(),
            });
        }
        let mut parser = Parser {
            toks: lex(src)?,
            pos: 0,
            params: &params,
            covs: &covs,
        };
        let ast = parser.expr()?;
        if *parser.peek() != Tok::End {
            return Err(parser.unexpected());
        }
        let mut tape = Vec::new();
        let mut used = vec![false; params.len()];
        compile(&ast, &mut tape, &mut used);
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(Error::InvalidModel(format!(
                "parameter '{}' is declared but not used in '{src}'",
                params[k]
            )));
        }
        let linear = tape.last().map(|i| i.class) != Some(Class::Curved);
        Ok(Formula {
            source: src.to_string(),
            params,
            covs,
            ast,
            tape,
            linear,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn params(&self) -> &[String] {
        &self.params
    }

    pub fn covariates(&self) -> &[String] {
        &self.covs
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// True when the formula is affine in its parameters, so its Hessian is zero.
    pub fn is_linear(&self) -> bool {
        self.linear
    }

    /// Fresh scratch space for [`Formula::eval_into`].
    pub fn buffer(&self) -> EvalBuffer {
        EvalBuffer::new(self.tape.len() + 2, self.params.len())
    }

    /// Value, gradient and Hessian at one covariate row.
    pub fn eval_with_derivs(&self, theta: &[f64], row: &[f64]) -> Result<DerivBundle> {
        let mut buf = self.buffer();
        let value = self.eval_into(&mut buf, theta, row, DerivOrder::Second)?;
        let p = self.params.len();
        Ok(DerivBundle {
            value,
            grad: DVector::from_column_slice(buf.grad()),
            hess: DMatrix::from_row_slice(p, p, buf.hess()),
        })
    }

    pub fn eval_value(&self, theta: &[f64], row: &[f64]) -> Result<f64> {
        let mut buf = self.buffer();
        self.eval_into(&mut buf, theta, row, DerivOrder::Value)
    }

    /// Replace the named parameters by constants, giving a formula over the
    /// remaining parameters in their original order.
    pub fn fix_params(&self, fixed: &[(String, f64)]) -> Result<Formula> {
        let mut values: Vec<Option<f64>> = vec![None; self.params.len()];
        for (name, v) in fixed {
            if let Some(k) = self.params.iter().position(|p| p == name) {
                values[k] = Some(*v);
            }
        }
        let text = render(&self.ast, &self.params, &self.covs, &values);
        let keep: Vec<&String> = self
            .params
            .iter()
            .zip(&values)
            .filter(|(_, v)| v.is_none())
            .map(|(p, _)| p)
            .collect();
        Formula::parse(&text, &keep, &self.covs)
    }

    /// Evaluate into `buf` to the requested derivative order and return the
    /// value. After the call `buf.grad()` and (for second order) `buf.hess()`
    /// hold the derivatives, the Hessian stored row-major.
    pub fn eval_into(&self, buf: &mut EvalBuffer, theta: &[f64], row: &[f64], order: DerivOrder) -> Result<f64> {
        let p = self.params.len();
        if theta.len() != p {
            return Err(Error::InvalidModel(format!(
                "formula '{}' has {p} parameters but {} values were given",
                self.source,
                theta.len()
            )));
        }
        if row.len() != self.covs.len() {
            return Err(Error::InvalidModel(format!(
                "formula '{}' has {} covariates but the row has {}",
                self.source,
                self.covs.len(),
                row.len()
            )));
        }
        if buf.p != p || buf.slots < self.tape.len() + 2 {
            *buf = self.buffer();
        }
        let grads = order >= DerivOrder::First;
        let hess = order == DerivOrder::Second;
        let t0 = self.tape.len();
        let t1 = t0 + 1;
        for (i, ins) in self.tape.iter().enumerate() {
            let dom = |what: &str| {
                Error::Domain(format!("{what} in '{}'", &self.source[ins.start..ins.end]))
            };
            let want_g = grads && ins.class != Class::Free;
            let want_h = hess && ins.class == Class::Curved;
            match ins.op {
                Op::Const(v) => buf.v[i] = v,
                Op::Cov(j) => buf.v[i] = row[j],
                Op::Param(k) => {
                    buf.v[i] = theta[k];
                    if want_g {
                        buf.g[i * p + k] = 1.0;
                    }
                }
                Op::Neg(a) => buf.affine(i, a, usize::MAX, -1.0, 0.0, want_g, want_h),
                Op::Add(a, b) => buf.affine(i, a, b, 1.0, 1.0, want_g, want_h),
                Op::Sub(a, b) => buf.affine(i, a, b, 1.0, -1.0, want_g, want_h),
                Op::Mul(a, b) => buf.mul(i, a, b, want_g, want_h),
                Op::Div(a, b) => {
                    let vb = buf.v[b];
                    if vb == 0.0 {
                        return Err(dom("division by zero"));
                    }
                    if self.tape[b].class == Class::Free {
                        buf.affine(i, a, usize::MAX, 1.0 / vb, 0.0, want_g, want_h);
                    } else {
                        let r = 1.0 / vb;
                        buf.unary(t0, b, r, -r * r, 2.0 * r * r * r, grads, hess);
                        buf.mul(i, a, t0, want_g, want_h);
                    }
                }
                Op::Pow(a, b) => {
                    let (va, vb) = (buf.v[a], buf.v[b]);
                    let (ca, cb) = (self.tape[a].class, self.tape[b].class);
                    if cb == Class::Free {
                        let (f, f1, f2) = power_parts(va, vb).ok_or_else(|| {
                            dom(&format!("power {va}^{vb} is undefined"))
                        })?;
                        if ca == Class::Free {
                            buf.v[i] = f;
                        } else {
                            buf.unary(i, a, f, f1, f2, want_g, want_h);
                        }
                    } else {
                        if va <= 0.0 {
                            return Err(dom(&format!(
                                "base {va} must be positive when the exponent depends on parameters"
                            )));
                        }
                        let l = va.ln();
                        buf.unary(t0, a, l, 1.0 / va, -1.0 / (va * va), grads, hess);
                        buf.mul(t1, b, t0, grads, hess);
                        let f = buf.v[t1].exp();
                        buf.unary(i, t1, f, f, f, want_g, want_h);
                    }
                }
                Op::Exp(a) => {
                    let f = buf.v[a].exp();
                    buf.unary(i, a, f, f, f, want_g, want_h);
                }
                Op::Log(a) => {
                    let va = buf.v[a];
                    if va <= 0.0 {
                        return Err(dom(&format!("log of non-positive value {va}")));
                    }
                    buf.unary(i, a, va.ln(), 1.0 / va, -1.0 / (va * va), want_g, want_h);
                }
                Op::Sqrt(a) => {
                    let va = buf.v[a];
                    if va < 0.0 || (va == 0.0 && self.tape[a].class != Class::Free) {
                        return Err(dom(&format!("square root of {va}")));
                    }
                    let s = va.sqrt();
                    buf.unary(i, a, s, 0.5 / s, -0.25 / (s * va), want_g, want_h);
                }
            }
            if !buf.v[i].is_finite() {
                return Err(dom("non-finite value"));
            }
        }
        let root = self.tape.len() - 1;
        buf.root = root;
        if grads {
            if self.tape[root].class == Class::Free {
                buf.g[root * p..(root + 1) * p].fill(0.0);
            }
            if buf.g[root * p..(root + 1) * p].iter().any(|g| !g.is_finite()) {
                return Err(Error::Domain(format!("non-finite gradient of '{}'", self.source)));
            }
        }
        if hess && self.tape[root].class != Class::Curved {
            buf.h[root * p * p..(root + 1) * p * p].fill(0.0);
        }
        Ok(buf.v[root])
    }
}

/// `(u^c, c u^(c-1), c(c-1) u^(c-2))` for a parameter-free exponent `c`, or
/// `None` when undefined. Non-positive bases need an integer exponent.
fn power_parts(u: f64, c: f64) -> Option<(f64, f64, f64)> {
    if u > 0.0 {
        return Some((u.powf(c), c * u.powf(c - 1.0), c * (c - 1.0) * u.powf(c - 2.0)));
    }
    if c.fract() != 0.0 || c.abs() > i32::MAX as f64 {
        return None;
    }
    let n = c as i32;
    if n == 0 {
        return Some((1.0, 0.0, 0.0));
    }
    if u == 0.0 && n < 0 {
        return None;
    }
    let f1 = if n == 1 { 1.0 } else { c * u.powi(n - 1) };
    let f2 = if n == 1 || n == 2 {
        c * (c - 1.0)
    } else {
        c * (c - 1.0) * u.powi(n - 2)
    };
    Some((u.powi(n), f1, f2))
}

fn render(e: &Expr, params: &[String], covs: &[String], fixed: &[Option<f64>]) -> String {
    let r = |x: &Expr| render(x, params, covs, fixed);
    match &e.node {
        Node::Const(v) => format_const(*v),
        Node::Cov(j) => covs[*j].clone(),
        Node::Param(k) => match fixed[*k] {
            Some(v) => format_const(v),
            None => params[*k].clone(),
        },
        Node::Neg(a) => format!("(-{})", r(a)),
        Node::Call(f, a) => {
            let name = match f {
                Func::Exp => "exp",
                Func::Log => "log",
                Func::Sqrt => "sqrt",
            };
            format!("{name}({})", r(a))
        }
        Node::Binary(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            format!("({} {sym} {})", r(a), r(b))
        }
    }
}

fn format_const(v: f64) -> String {
    if v < 0.0 {
        format!("(-{:?})", -v)
    } else {
        format!("{v:?}")
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Scratch storage for jets: one slot per tape instruction plus two temporaries.
#[derive(Debug, Clone)]
pub struct EvalBuffer {
    p: usize,
    slots: usize,
    root: usize,
    v: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
}

impl EvalBuffer {
    fn new(slots: usize, p: usize) -> Self {
        EvalBuffer {
            p,
            slots,
            root: 0,
            v: vec![0.0; slots],
            g: vec![0.0; slots * p],
            h: vec![0.0; slots * p * p],
        }
    }

    pub fn grad(&self) -> &[f64] {
        &self.g[self.root * self.p..(self.root + 1) * self.p]
    }

    /// Row-major Hessian of the last evaluation.
    pub fn hess(&self) -> &[f64] {
        let pp = self.p * self.p;
        &self.h[self.root * pp..(self.root + 1) * pp]
    }

    /// out = sa * a + sb * b, with `b == usize::MAX` meaning absent.
    #[allow(clippy::too_many_arguments)]
    fn affine(&mut self, out: usize, a: usize, b: usize, sa: f64, sb: f64, grads: bool, hess: bool) {
        let p = self.p;
        let has_b = b != usize::MAX;
        self.v[out] = sa * self.v[a] + if has_b { sb * self.v[b] } else { 0.0 };
        if grads {
            for r in 0..p {
                let gb = if has_b { sb * self.g[b * p + r] } else { 0.0 };
                self.g[out * p + r] = sa * self.g[a * p + r] + gb;
            }
        }
        if hess {
            let pp = p * p;
            for r in 0..pp {
                let hb = if has_b { sb * self.h[b * pp + r] } else { 0.0 };
                self.h[out * pp + r] = sa * self.h[a * pp + r] + hb;
            }
        }
    }

    fn mul(&mut self, out: usize, a: usize, b: usize, grads: bool, hess: bool) {
        let p = self.p;
        let (va, vb) = (self.v[a], self.v[b]);
        self.v[out] = va * vb;
        if hess {
            let pp = p * p;
            for r in 0..p {
                let (gar, gbr) = (self.g[a * p + r], self.g[b * p + r]);
                for s in 0..p {
                    let (gas, gbs) = (self.g[a * p + s], self.g[b * p + s]);
                    let idx = r * p + s;
                    self.h[out * pp + idx] = va * self.h[b * pp + idx]
                        + vb * self.h[a * pp + idx]
                        + (gar * gbs + gbr * gas);
                }
            }
        }
        if grads {
            for r in 0..p {
                self.g[out * p + r] = va * self.g[b * p + r] + vb * self.g[a * p + r];
            }
        }
    }

    /// out = f(a) given f, f' and f'' at the value of a.
    #[allow(clippy::too_many_arguments)]
    fn unary(&mut self, out: usize, a: usize, f: f64, f1: f64, f2: f64, grads: bool, hess: bool) {
        let p = self.p;
        self.v[out] = f;
        if hess {
            let pp = p * p;
            for r in 0..p {
                let gar = self.g[a * p + r];
                for s in 0..p {
                    let idx = r * p + s;
                    self.h[out * pp + idx] = f1 * self.h[a * pp + idx] + f2 * (gar * self.g[a * p + s]);
                }
            }
        }
        if grads {
            for r in 0..p {
                self.g[out * p + r] = f1 * self.g[a * p + r];
            }
        }
    }
}
