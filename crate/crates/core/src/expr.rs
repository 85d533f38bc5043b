//! Scalar expressions over chart coordinates.
//!
//! An [`Expr`] is an immutable, reference-counted tree. Trees produced by
//! [`parse`] keep the exact shape of the source text; trees produced by
//! [`Expr::diff`] and the arithmetic helpers go through the conservative
//! simplifier (constant folding, 0/1 identities, merging of like powers).
//!
//! Grammar, from loosest to tightest binding:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := atom ('^' unary)?          right associative
//! atom    := number | name | name '(' args ')' | '(' sum ')'
//! ```
//!
//! Calls: `sin cos tan sinh cosh tanh exp log sqrt` (one argument) and
//! `pow(a, b)`. Named constants: `pi` (or `π`) and `e`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Errors from parsing or evaluating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point has {found} coordinates, expression needs at least {needed}")]
    PointLength { needed: usize, found: usize },
}

/// Built-in one-argument functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
            Func::Tanh => x.tanh(),
            Func::Exp => x.exp(),
            Func::Log => {
                if x < 0.0 {
                    return Err(ExprError::Domain(format!("log of negative value {x}")));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(ExprError::Domain(format!("sqrt of negative value {x}")));
                }
                x.sqrt()
            }
        })
    }
}

/// Node kinds of the expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// Reference to the coordinate with this index.
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Call(Func, Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    /// Bit k set when coordinate k (k < 64) occurs in the subtree.
    vars: u64,
    size: usize,
}

/// Immutable expression tree; cloning is cheap.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.node == other.0.node
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.node.fmt(f)
    }
}

fn var_bit(index: usize) -> u64 {
    if index < 64 {
        1u64 << index
    } else {
        // Coordinates past 63 share the top bit; `depends_on` stays conservative.
        1u64 << 63
    }
}

impl Expr {
    /// Wraps a node without simplification.
    pub fn raw(node: Node) -> Expr {
        let (vars, size) = match &node {
            Node::Const(_) => (0, 1),
            Node::Var(i) => (var_bit(*i), 1),
            Node::Neg(a) | Node::Call(_, a) => (a.0.vars, a.0.size + 1),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => (a.0.vars | b.0.vars, a.0.size + b.0.size + 1),
        };
        Expr(Arc::new(Inner { node, vars, size }))
    }

    pub fn constant(value: f64) -> Expr {
        Expr::raw(Node::Const(value))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(index: usize) -> Expr {
        Expr::raw(Node::Var(index))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    /// Number of nodes in the tree (shared subtrees counted once per use).
    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.0.node {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    fn is_const(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    /// True when coordinate `index` may occur in the expression.
    pub fn depends_on(&self, index: usize) -> bool {
        self.0.vars & var_bit(index) != 0
    }

    /// True when no coordinate occurs in the expression.
    pub fn is_constant(&self) -> bool {
        self.0.vars == 0
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        fn walk(e: &Expr, best: &mut Option<usize>) {
            match e.node() {
                Node::Const(_) => {}
                Node::Var(i) => *best = Some(best.map_or(*i, |b| b.max(*i))),
                Node::Neg(a) | Node::Call(_, a) => walk(a, best),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => {
                    walk(a, best);
                    walk(b, best);
                }
            }
        }
        let mut best = None;
        if self.0.vars != 0 {
            walk(self, &mut best);
        }
        best
    }

    // ---- simplifying constructors -------------------------------------

    pub fn neg(a: Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::raw(Node::Neg(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => return Expr::constant(x + y),
            (Some(x), _) if x == 0.0 => return b,
            (_, Some(y)) if y == 0.0 => return a,
            _ => {}
        }
        if let Node::Neg(nb) = b.node() {
            return Expr::sub(a, nb.clone());
        }
        if let Node::Neg(na) = a.node() {
            return Expr::sub(b, na.clone());
        }
        if a == b {
            return Expr::mul(Expr::constant(2.0), a);
        }
        Expr::raw(Node::Add(a, b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => return Expr::constant(x - y),
            (Some(x), _) if x == 0.0 => return Expr::neg(b),
            (_, Some(y)) if y == 0.0 => return a,
            _ => {}
        }
        if a == b {
            return Expr::zero();
        }
        if let Node::Neg(nb) = b.node() {
            return Expr::add(a, nb.clone());
        }
        Expr::raw(Node::Sub(a, b))
    }

    /// Splits `c * rest` into its numeric coefficient and remainder.
    fn split_coefficient(e: &Expr) -> (f64, Option<Expr>) {
        match e.node() {
            Node::Const(c) => (*c, None),
            Node::Mul(a, b) => match a.as_const() {
                Some(c) => (c, Some(b.clone())),
                None => (1.0, Some(e.clone())),
            },
            Node::Neg(inner) => {
                let (c, rest) = Expr::split_coefficient(inner);
                (-c, rest)
            }
            _ => (1.0, Some(e.clone())),
        }
    }

    /// Splits `base ^ k` with constant `k`; anything else is `e ^ 1`.
    fn split_power(e: &Expr) -> (Expr, f64) {
        if let Node::Pow(base, exp) = e.node() {
            if let Some(k) = exp.as_const() {
                return (base.clone(), k);
            }
        }
        (e.clone(), 1.0)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        let (ca, ra) = Expr::split_coefficient(&a);
        let (cb, rb) = Expr::split_coefficient(&b);
        let coeff = ca * cb;
        if coeff == 0.0 {
            return Expr::zero();
        }
        let rest = match (ra, rb) {
            (None, None) => return Expr::constant(coeff),
            (Some(x), None) | (None, Some(x)) => x,
            (Some(x), Some(y)) => {
                let (bx, kx) = Expr::split_power(&x);
                let (by, ky) = Expr::split_power(&y);
                if bx == by && kx.fract() == 0.0 && ky.fract() == 0.0 {
                    Expr::pow(bx, Expr::constant(kx + ky))
                } else {
                    Expr::raw(Node::Mul(x, y))
                }
            }
        };
        if coeff == 1.0 {
            rest
        } else if coeff == -1.0 {
            Expr::neg(rest)
        } else if let Some(c) = rest.as_const() {
            Expr::constant(coeff * c)
        } else {
            match Expr::split_coefficient(&rest) {
                (c, Some(r)) if c != 1.0 => Expr::mul(Expr::constant(coeff * c), r),
                _ => Expr::raw(Node::Mul(Expr::constant(coeff), rest)),
            }
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => return Expr::constant(x / y),
            (Some(x), _) if x == 0.0 => return Expr::zero(),
            (_, Some(y)) if y == 1.0 => return a,
            (_, Some(y)) if y == -1.0 => return Expr::neg(a),
            _ => {}
        }
        if a == b {
            return Expr::one();
        }
        let (ba, ka) = Expr::split_power(&a);
        let (bb, kb) = Expr::split_power(&b);
        if ba == bb && ka.fract() == 0.0 && kb.fract() == 0.0 {
            return Expr::pow(ba, Expr::constant(ka - kb));
        }
        if let Some(c) = b.as_const() {
            if c != 0.0 {
                return Expr::mul(Expr::constant(1.0 / c), a);
            }
        }
        Expr::raw(Node::Div(a, b))
    }

    pub fn pow(base: Expr, exp: Expr) -> Expr {
        if let Some(k) = exp.as_const() {
            if k == 0.0 {
                return Expr::one();
            }
            if k == 1.0 {
                return base;
            }
            if let Some(b) = base.as_const() {
                let folded = powf_checked(b, k);
                if let Ok(v) = folded {
                    if v.is_finite() {
                        return Expr::constant(v);
                    }
                }
            }
            if let Node::Pow(inner_base, inner_exp) = base.node() {
                if let Some(j) = inner_exp.as_const() {
                    if j.fract() == 0.0 && k.fract() == 0.0 {
                        return Expr::pow(inner_base.clone(), Expr::constant(j * k));
                    }
                }
            }
        }
        if base.is_const(1.0) {
            return Expr::one();
        }
        Expr::raw(Node::Pow(base, exp))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        if let Some(c) = arg.as_const() {
            if let Ok(v) = func.apply(c) {
                if v.is_finite() {
                    return Expr::constant(v);
                }
            }
        }
        if let (Func::Exp, Node::Call(Func::Log, inner)) = (func, arg.node()) {
            // exp(log u) = u wherever log u is defined.
            return inner.clone();
        }
        Expr::raw(Node::Call(func, arg))
    }

    pub fn powi(self, k: i32) -> Expr {
        Expr::pow(self, Expr::constant(k as f64))
    }

    pub fn sin(self) -> Expr {
        Expr::call(Func::Sin, self)
    }
    pub fn cos(self) -> Expr {
        Expr::call(Func::Cos, self)
    }
    pub fn exp(self) -> Expr {
        Expr::call(Func::Exp, self)
    }
    pub fn log(self) -> Expr {
        Expr::call(Func::Log, self)
    }
    pub fn sqrt(self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }
    pub fn sinh(self) -> Expr {
        Expr::call(Func::Sinh, self)
    }
    pub fn cosh(self) -> Expr {
        Expr::call(Func::Cosh, self)
    }

    /// Sum of a sequence of expressions.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), Expr::add)
    }

    /// Rebuilds the tree bottom-up through the simplifying constructors.
    pub fn simplify(&self) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Neg(a) => Expr::neg(a.simplify()),
            Node::Add(a, b) => Expr::add(a.simplify(), b.simplify()),
            Node::Sub(a, b) => Expr::sub(a.simplify(), b.simplify()),
            Node::Mul(a, b) => Expr::mul(a.simplify(), b.simplify()),
            Node::Div(a, b) => Expr::div(a.simplify(), b.simplify()),
            Node::Pow(a, b) => Expr::pow(a.simplify(), b.simplify()),
            Node::Call(f, a) => Expr::call(*f, a.simplify()),
        }
    }

    /// Exact partial derivative with respect to coordinate `index`.
    pub fn diff(&self, index: usize) -> Expr {
        if !self.depends_on(index) {
            return Expr::zero();
        }
        match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(i) => {
                if *i == index {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => Expr::neg(a.diff(index)),
            Node::Add(a, b) => Expr::add(a.diff(index), b.diff(index)),
            Node::Sub(a, b) => Expr::sub(a.diff(index), b.diff(index)),
            Node::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(index), b.clone()),
                Expr::mul(a.clone(), b.diff(index)),
            ),
            Node::Div(a, b) => {
                let da = a.diff(index);
                let db = b.diff(index);
                // a'/b - a b'/b^2
                Expr::sub(
                    Expr::div(da, b.clone()),
                    Expr::div(Expr::mul(a.clone(), db), b.clone().powi(2)),
                )
            }
            Node::Pow(base, exp) => {
                if !exp.depends_on(index) {
                    // k u^(k-1) u'
                    let km1 = Expr::sub(exp.clone(), Expr::one());
                    Expr::mul(
                        Expr::mul(exp.clone(), Expr::pow(base.clone(), km1)),
                        base.diff(index),
                    )
                } else if !base.depends_on(index) {
                    // u^v log(u) v'
                    Expr::mul(
                        Expr::mul(self.clone(), base.clone().log()),
                        exp.diff(index),
                    )
                } else {
                    // u^v (v' log u + v u'/u)
                    let term = Expr::add(
                        Expr::mul(exp.diff(index), base.clone().log()),
                        Expr::div(Expr::mul(exp.clone(), base.diff(index)), base.clone()),
                    );
                    Expr::mul(self.clone(), term)
                }
            }
            Node::Call(func, a) => {
                let da = a.diff(index);
                let outer = match func {
                    Func::Sin => a.clone().cos(),
                    Func::Cos => Expr::neg(a.clone().sin()),
                    Func::Tan => Expr::div(Expr::one(), a.clone().cos().powi(2)),
                    Func::Sinh => a.clone().cosh(),
                    Func::Cosh => a.clone().sinh(),
                    Func::Tanh => Expr::sub(
                        Expr::one(),
                        Expr::call(Func::Tanh, a.clone()).powi(2),
                    ),
                    Func::Exp => self.clone(),
                    Func::Log => Expr::div(Expr::one(), a.clone()),
                    Func::Sqrt => Expr::div(Expr::constant(0.5), self.clone()),
                };
                Expr::mul(outer, da)
            }
        }
    }

    /// Evaluates at a point. Non-finite results are returned as values;
    /// negative arguments of `log`/`sqrt` and negative bases under
    /// non-integer powers are domain errors.
    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        if let Some(max) = self.max_var_fast() {
            if max >= point.len() {
                return Err(ExprError::PointLength {
                    needed: max + 1,
                    found: point.len(),
                });
            }
        }
        self.eval_unchecked(point)
    }

    fn max_var_fast(&self) -> Option<usize> {
        if self.0.vars == 0 {
            None
        } else if self.0.vars & (1u64 << 63) != 0 {
            self.max_var()
        } else {
            Some(63 - self.0.vars.leading_zeros() as usize)
        }
    }

    fn eval_unchecked(&self, p: &[f64]) -> Result<f64, ExprError> {
        Ok(match self.node() {
            Node::Const(c) => *c,
            Node::Var(i) => p[*i],
            Node::Neg(a) => -a.eval_unchecked(p)?,
            Node::Add(a, b) => a.eval_unchecked(p)? + b.eval_unchecked(p)?,
            Node::Sub(a, b) => a.eval_unchecked(p)? - b.eval_unchecked(p)?,
            Node::Mul(a, b) => a.eval_unchecked(p)? * b.eval_unchecked(p)?,
            Node::Div(a, b) => a.eval_unchecked(p)? / b.eval_unchecked(p)?,
            Node::Pow(a, b) => powf_checked(a.eval_unchecked(p)?, b.eval_unchecked(p)?)?,
            Node::Call(f, a) => f.apply(a.eval_unchecked(p)?)?,
        })
    }

    /// Fully parenthesized infix text that [`parse`] reads back to the same tree.
    pub fn to_infix(&self, coords: &[impl AsRef<str>]) -> String {
        let mut out = String::new();
        self.write_infix(coords, &mut out);
        out
    }

    fn write_infix(&self, coords: &[impl AsRef<str>], out: &mut String) {
        match self.node() {
            Node::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    out.push_str("(-");
                    out.push_str(&format_number(-c));
                    out.push(')');
                } else {
                    out.push_str(&format_number(*c));
                }
            }
            Node::Var(i) => match coords.get(*i) {
                Some(name) => out.push_str(name.as_ref()),
                None => out.push_str(&format!("x{i}")),
            },
            Node::Neg(a) => {
                out.push_str("(-");
                a.write_infix(coords, out);
                out.push(')');
            }
            Node::Add(a, b) => binary(a, " + ", b, coords, out),
            Node::Sub(a, b) => binary(a, " - ", b, coords, out),
            Node::Mul(a, b) => binary(a, " * ", b, coords, out),
            Node::Div(a, b) => binary(a, " / ", b, coords, out),
            Node::Pow(a, b) => binary(a, " ^ ", b, coords, out),
            Node::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write_infix(coords, out);
                out.push(')');
            }
        }
    }
}

fn binary(a: &Expr, op: &str, b: &Expr, coords: &[impl AsRef<str>], out: &mut String) {
    out.push('(');
    a.write_infix(coords, out);
    out.push_str(op);
    b.write_infix(coords, out);
    out.push(')');
}

fn format_number(v: f64) -> String {
    if v.is_infinite() {
        // Not producible by the parser; printed as an overflowing literal.
        return "1e999".to_string();
    }
    let s = format!("{v:?}");
    s
}

fn powf_checked(base: f64, exp: f64) -> Result<f64, ExprError> {
    if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        return Ok(base.powi(exp as i32));
    }
    if base < 0.0 {
        return Err(ExprError::Domain(format!(
            "negative base {base} raised to non-integer power {exp}"
        )));
    }
    Ok(base.powf(exp))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: [&str; 0] = [];
        f.write_str(&self.to_infix(&names))
    }
}

// ---- parser -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ExprError> {
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

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(ch) = self.src[start..].chars().next() else {
            return Ok((Tok::End, start));
        };
        if ch.is_ascii_digit() || (ch == '.' && self.peek_digit(start + 1)) {
            return self.number(start);
        }
        if ch.is_alphabetic() || ch == '_' {
            let mut end = start;
            for (off, c) in self.src[start..].char_indices() {
                if c.is_alphanumeric() || c == '_' {
                    end = start + off + c.len_utf8();
                } else {
                    break;
                }
            }
            self.pos = end;
            return Ok((Tok::Ident(self.src[start..end].to_string()), start));
        }
        self.pos += ch.len_utf8();
        let tok = match ch {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(ch),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                })
            }
        };
        Ok((tok, start))
    }

    fn peek_digit(&self, at: usize) -> bool {
        self.src
            .as_bytes()
            .get(at)
            .is_some_and(|b| b.is_ascii_digit())
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ExprError> {
        let bytes = self.src.as_bytes();
        let mut i = start;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
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
        self.pos = i;
        let text = &self.src[start..i];
        text.parse::<f64>()
            .map(|v| (Tok::Num(v), start))
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    coords: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, what: &str) -> ExprError {
        let found = match self.peek() {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        };
        ExprError::Syntax {
            offset: self.offset(),
            message: format!("expected {what}, found {found}"),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Tok::Op(c @ ('+' | '-')) = *self.peek() {
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::raw(if c == '+' {
                Node::Add(lhs, rhs)
            } else {
                Node::Sub(lhs, rhs)
            });
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c @ ('*' | '/')) = *self.peek() {
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::raw(if c == '*' {
                Node::Mul(lhs, rhs)
            } else {
                Node::Div(lhs, rhs)
            });
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                let operand = self.unary()?;
                // A negated literal is stored as a negative constant.
                Ok(match operand.as_const() {
                    Some(c) => Expr::constant(-c),
                    None => Expr::raw(Node::Neg(operand)),
                })
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::raw(Node::Pow(base, exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::constant(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.sum()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                if let Some(i) = self.coords.iter().position(|c| *c == name) {
                    return Ok(Expr::var(i));
                }
                match name.as_str() {
                    "pi" | "π" => return Ok(Expr::constant(std::f64::consts::PI)),
                    "e" => return Ok(Expr::constant(std::f64::consts::E)),
                    _ => {}
                }
                let func = Func::from_name(&name);
                if func.is_none() && name != "pow" {
                    return Err(ExprError::UnknownIdentifier { name, offset });
                }
                if *self.peek() != Tok::LParen {
                    return Err(self.unexpected(&format!("`(` after `{name}`")));
                }
                self.bump();
                let mut args = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        args.push(self.sum()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`)` or `,`"));
                }
                self.bump();
                let expected = if func.is_some() { 1 } else { 2 };
                if args.len() != expected {
                    return Err(ExprError::Arity {
                        name,
                        expected,
                        found: args.len(),
                    });
                }
                let mut args = args.into_iter();
                let first = args.next().unwrap_or_else(Expr::zero);
                Ok(match func {
                    Some(f) => Expr::raw(Node::Call(f, first)),
                    None => Expr::raw(Node::Pow(first, args.next().unwrap_or_else(Expr::one))),
                })
            }
            _ => Err(self.unexpected("a number, name or `(`")),
        }
    }
}

/// Parses `source` over the named coordinates. The tree is returned exactly
/// as written (no simplification).
pub fn parse(source: &str, coords: &[impl AsRef<str>]) -> Result<Expr, ExprError> {
    let coords: Vec<String> = coords.iter().map(|c| c.as_ref().to_string()).collect();
    let toks = Lexer::tokens(source)?;
    let mut parser = Parser {
        toks,
        at: 0,
        coords: &coords,
    };
    let e = parser.sum()?;
    if *parser.peek() != Tok::End {
        return Err(parser.unexpected("an operator or end of input"));
    }
    Ok(e)
}

// ---- compiled evaluation --------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, usize),
    Call(Func, usize),
}

/// A batch of expressions flattened into one instruction list with shared
/// subexpressions evaluated once.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<usize>,
    min_len: usize,
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut ops = Vec::new();
        let mut slots: HashMap<Op, usize> = HashMap::new();
        let mut by_ptr: HashMap<*const Inner, usize> = HashMap::new();
        let mut min_len = 0;
        let outputs = exprs
            .iter()
            .map(|e| {
                if let Some(m) = e.max_var() {
                    min_len = min_len.max(m + 1);
                }
                Tape::emit(e, &mut ops, &mut slots, &mut by_ptr)
            })
            .collect();
        Tape {
            ops,
            outputs,
            min_len,
        }
    }

    fn emit(
        e: &Expr,
        ops: &mut Vec<Op>,
        slots: &mut HashMap<Op, usize>,
        by_ptr: &mut HashMap<*const Inner, usize>,
    ) -> usize {
        let key = Arc::as_ptr(&e.0);
        if let Some(&s) = by_ptr.get(&key) {
            return s;
        }
        let mut rec = |x: &Expr| Tape::emit(x, ops, slots, by_ptr);
        let op = match e.node() {
            Node::Const(c) => Op::Const(c.to_bits()),
            Node::Var(i) => Op::Var(*i),
            Node::Neg(a) => Op::Neg(rec(a)),
            Node::Add(a, b) => {
                let (x, y) = (rec(a), rec(b));
                Op::Add(x, y)
            }
            Node::Sub(a, b) => {
                let (x, y) = (rec(a), rec(b));
                Op::Sub(x, y)
            }
            Node::Mul(a, b) => {
                let (x, y) = (rec(a), rec(b));
                Op::Mul(x, y)
            }
            Node::Div(a, b) => {
                let (x, y) = (rec(a), rec(b));
                Op::Div(x, y)
            }
            Node::Pow(a, b) => {
                let (x, y) = (rec(a), rec(b));
                Op::Pow(x, y)
            }
            Node::Call(f, a) => Op::Call(*f, rec(a)),
        };
        let slot = *slots.entry(op).or_insert_with(|| {
            ops.push(op);
            ops.len() - 1
        });
        by_ptr.insert(key, slot);
        slot
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Number of distinct instructions after sharing.
    pub fn instruction_count(&self) -> usize {
        self.ops.len()
    }

    /// Evaluates every output; `out` is resized to [`Tape::len`].
    pub fn eval_into(&self, point: &[f64], out: &mut Vec<f64>) -> Result<(), ExprError> {
        if point.len() < self.min_len {
            return Err(ExprError::PointLength {
                needed: self.min_len,
                found: point.len(),
            });
        }
        let mut reg = vec![0.0f64; self.ops.len()];
        for (k, op) in self.ops.iter().enumerate() {
            reg[k] = match *op {
                Op::Const(bits) => f64::from_bits(bits),
                Op::Var(i) => point[i],
                Op::Neg(a) => -reg[a],
                Op::Add(a, b) => reg[a] + reg[b],
                Op::Sub(a, b) => reg[a] - reg[b],
                Op::Mul(a, b) => reg[a] * reg[b],
                Op::Div(a, b) => reg[a] / reg[b],
                Op::Pow(a, b) => powf_checked(reg[a], reg[b])?,
                Op::Call(f, a) => f.apply(reg[a])?,
            };
        }
        out.clear();
        out.extend(self.outputs.iter().map(|&s| reg[s]));
        Ok(())
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut out = Vec::with_capacity(self.outputs.len());
        self.eval_into(point, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xy() -> Vec<String> {
        vec!["x".into(), "y".into()]
    }

    #[test]
    fn parses_sum_of_squares() {
        let e = parse("x^2 + y^2", &xy()).unwrap();
        let expected = Expr::raw(Node::Add(
            Expr::raw(Node::Pow(Expr::var(0), Expr::constant(2.0))),
            Expr::raw(Node::Pow(Expr::var(1), Expr::constant(2.0))),
        ));
        assert_eq!(e, expected);
    }

    #[test]
    fn parses_calls() {
        let e = parse("sin(r)*exp(2*f)", &["r", "f"]).unwrap();
        match e.node() {
            Node::Mul(a, b) => {
                assert!(matches!(a.node(), Node::Call(Func::Sin, _)));
                assert!(matches!(b.node(), Node::Call(Func::Exp, _)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn syntax_error_offset() {
        let err = parse("x +* y", &xy()).unwrap_err();
        assert_eq!(
            err,
            ExprError::Syntax {
                offset: 3,
                message: "expected a number, name or `(`, found `*`".into()
            }
        );
    }

    #[test]
    fn unknown_identifier_and_arity() {
        assert!(matches!(
            parse("x + z", &xy()),
            Err(ExprError::UnknownIdentifier { ref name, offset: 4 }) if name == "z"
        ));
        assert!(matches!(
            parse("sin(x, y)", &xy()),
            Err(ExprError::Arity { expected: 1, found: 2, .. })
        ));
        assert!(matches!(
            parse("pow(x)", &xy()),
            Err(ExprError::Arity { expected: 2, found: 1, .. })
        ));
        assert!(matches!(parse("abs(x)", &xy()), Err(ExprError::UnknownIdentifier { .. })));
    }

    #[test]
    fn precedence() {
        let v = |s: &str| parse(s, &xy()).unwrap().eval(&[2.0, 3.0]).unwrap();
        assert_eq!(v("-x^2"), -4.0);
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("x - y - 1"), -2.0);
        assert_eq!(v("x / y * 3"), 2.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v("1.5e1 + .5"), 15.5);
        assert_eq!(v("pow(x, y)"), 8.0);
        assert_eq!(v("2*e - 2*e"), 0.0);
    }

    #[test]
    fn evaluates_examples() {
        let e = parse("x^2+y^2", &xy()).unwrap();
        assert_eq!(e.eval(&[3.0, 4.0]).unwrap(), 25.0);
        let l = parse("log(x)", &["x"]).unwrap();
        assert!(matches!(l.eval(&[-1.0]), Err(ExprError::Domain(_))));
        let s = parse("sin(pi/2)", &[] as &[&str]).unwrap();
        assert_eq!(s.eval(&[]).unwrap(), 1.0);
        let q = parse("sqrt(x)", &["x"]).unwrap();
        assert!(matches!(q.eval(&[-0.5]), Err(ExprError::Domain(_))));
        assert!(parse("1/x", &["x"]).unwrap().eval(&[0.0]).unwrap().is_infinite());
    }

    #[test]
    fn derivative_examples() {
        let e = parse("x^2+y^2", &xy()).unwrap();
        let d = e.diff(0);
        assert_eq!(d, Expr::mul(Expr::constant(2.0), Expr::var(0)));
        let s = parse("sin(r)", &["r"]).unwrap().diff(0);
        assert_eq!(s, Expr::var(0).cos());

        // Central-difference oracle for d/dx exp(2x) at 0.
        let e2 = parse("exp(2*x)", &["x"]).unwrap();
        let h: f64 = 1e-5;
        let oracle = ((2.0 * h).exp() - (-2.0 * h).exp()) / (2.0 * h);
        assert!((oracle - 2.0).abs() < 1e-9);
        assert_eq!(e2.diff(0).eval(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn simplifier_identities() {
        let x = Expr::var(0);
        assert_eq!(Expr::mul(Expr::zero(), x.clone()), Expr::zero());
        assert_eq!(Expr::add(x.clone(), Expr::zero()), x);
        assert_eq!(Expr::mul(x.clone(), x.clone()), x.clone().powi(2));
        assert_eq!(Expr::div(x.clone().powi(3), x.clone()), x.clone().powi(2));
        assert_eq!(Expr::sub(x.clone(), x.clone()), Expr::zero());
        assert_eq!(Expr::pow(x.clone(), Expr::one()), x);
        assert!(Expr::mul(Expr::constant(3.0), Expr::constant(4.0)).is_const(12.0));
        // log(-1) must stay symbolic so evaluation reports the domain error.
        assert!(Expr::constant(-1.0).log().as_const().is_none());
    }

    #[test]
    fn tape_matches_tree_evaluation() {
        let src = [
            "exp(2*x)*sin(y)^2",
            "sqrt(x^2 + y^2) / (1 + x)",
            "tanh(x*y) - cosh(y)^3",
            "pow(x, 1.5) * log(y)",
        ];
        let exprs: Vec<Expr> = src
            .iter()
            .flat_map(|s| {
                let e = parse(s, &xy()).unwrap();
                vec![e.clone(), e.diff(0), e.diff(1).diff(0)]
            })
            .collect();
        let tape = Tape::compile(&exprs);
        let p = [0.7, 1.3];
        let vals = tape.eval(&p).unwrap();
        for (e, v) in exprs.iter().zip(vals) {
            assert_eq!(e.eval(&p).unwrap(), v);
        }
        assert!(tape.instruction_count() < exprs.iter().map(Expr::size).sum::<usize>());
        let bad = Tape::compile(&[parse("log(x)", &["x"]).unwrap()]);
        assert!(bad.eval(&[-2.0]).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-3.0f64..3.0).prop_map(Expr::constant),
            (0usize..2).prop_map(Expr::var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::raw(Node::Add(a, b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::raw(Node::Sub(a, b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::raw(Node::Mul(a, b))),
                inner.clone().prop_map(|a| Expr::raw(Node::Neg(a))),
                inner.clone().prop_map(|a| Expr::raw(Node::Call(Func::Sin, a))),
                inner.clone().prop_map(|a| Expr::raw(Node::Call(Func::Cos, a))),
                inner
                    .clone()
                    .prop_map(|a| Expr::raw(Node::Call(Func::Exp, Expr::raw(Node::Call(Func::Sin, a))))),
                inner.clone().prop_map(|a| Expr::raw(Node::Pow(a, Expr::constant(2.0)))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let text = e.to_infix(&xy());
            let back = parse(&text, &xy()).unwrap();
            prop_assert_eq!(back.eval(&[x, y]).unwrap().to_bits(), e.eval(&[x, y]).unwrap().to_bits());
        }

        #[test]
        fn simplify_preserves_value(e in arb_expr(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let a = e.eval(&[x, y]).unwrap();
            let b = e.simplify().eval(&[x, y]).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        }

        #[test]
        fn derivative_is_linear(u in arb_expr(), v in arb_expr(), a in -2.0f64..2.0, b in -2.0f64..2.0,
                                x in -1.5f64..1.5, y in -1.5f64..1.5) {
            let combo = Expr::add(Expr::mul(Expr::constant(a), u.clone()), Expr::mul(Expr::constant(b), v.clone()));
            let lhs = combo.diff(0).eval(&[x, y]).unwrap();
            let rhs = a * u.diff(0).eval(&[x, y]).unwrap() + b * v.diff(0).eval(&[x, y]).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn mixed_partials_commute(e in arb_expr(), x in -1.5f64..1.5, y in -1.5f64..1.5) {
            let xy_ = e.diff(0).diff(1).eval(&[x, y]).unwrap();
            let yx = e.diff(1).diff(0).eval(&[x, y]).unwrap();
            prop_assert!((xy_ - yx).abs() <= 1e-12 * (1.0 + xy_.abs()), "{} vs {}", xy_, yx);
        }

        #[test]
        fn derivative_matches_finite_difference(e in arb_expr(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let h = 1e-4;
            let f = |t: f64| e.eval(&[t, y]).unwrap();
            let fd = (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
            let exact = e.diff(0).eval(&[x, y]).unwrap();
            let scale = 1.0 + exact.abs() + f(x).abs();
            prop_assert!((fd - exact).abs() <= 1e-7 * scale, "fd {} exact {}", fd, exact);
        }
    }
}
