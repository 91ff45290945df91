//! Coefficient expressions in one free variable `y`.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | factor
//! factor := atom ['^' exponent]
//! exponent := ['-'] number | '(' constant-expr ')'
//! atom   := number | 'y' | '(' expr ')' | func '(' expr [',' expr] ')'
//! func   := exp | log | sqrt | abs | min | max
//! ```
//!
//! Exponents must be constant so that power-law asymptotics stay decidable.
//! A unary minus applied directly to a literal folds into a negative
//! constant, which keeps `parse(print(e)) == e` structurally.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func2 {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
    Call2(Func2, Box<Node>, Box<Node>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at position {position}: expected {expected}, found {found}")]
    Syntax {
        /// 1-based character position of the offending token.
        position: usize,
        expected: String,
        found: String,
    },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { position: usize, name: String },
    #[error("function `{name}` at position {position} takes {expected} argument(s), got {got}")]
    Arity {
        position: usize,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("exponent at position {position} must be a constant")]
    NonConstantExponent { position: usize },
}

impl ParseError {
    pub fn position(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { position, .. }
            | ParseError::UnknownIdentifier { position, .. }
            | ParseError::Arity { position, .. }
            | ParseError::NonConstantExponent { position } => Some(*position),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("power of negative base {base} with non-integer exponent {exponent}")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite result at y = {0}")]
    NonFinite(f64),
}

/// A parsed coefficient function of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientExpr {
    root: Node,
    source_text: String,
}

impl CoefficientExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parse_expr(text)
    }

    pub fn from_node(root: Node) -> Self {
        let source_text = print_node(&root);
        Self { root, source_text }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_node(Node::Const(c))
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn eval(&self, y: f64) -> Result<f64, EvalError> {
        let v = eval_node(&self.root, y)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(y))
        }
    }

    pub fn pretty(&self) -> String {
        print_node(&self.root)
    }

    pub fn depends_on_y(&self) -> bool {
        node_has_var(&self.root)
    }

    /// `self * other`
    pub fn mul(&self, other: &CoefficientExpr) -> CoefficientExpr {
        Self::from_node(Node::Mul(
            Box::new(self.root.clone()),
            Box::new(other.root.clone()),
        ))
    }

    /// `self / other`
    pub fn div(&self, other: &CoefficientExpr) -> CoefficientExpr {
        Self::from_node(Node::Div(
            Box::new(self.root.clone()),
            Box::new(other.root.clone()),
        ))
    }

    /// `self + other`
    pub fn add(&self, other: &CoefficientExpr) -> CoefficientExpr {
        Self::from_node(Node::Add(
            Box::new(self.root.clone()),
            Box::new(other.root.clone()),
        ))
    }

    pub fn powf(&self, p: f64) -> CoefficientExpr {
        Self::from_node(Node::Pow(Box::new(self.root.clone()), p))
    }

    pub fn neg(&self) -> CoefficientExpr {
        Self::from_node(Node::Neg(Box::new(self.root.clone())))
    }

    /// The expression in a new variable `u` with `y = shift + scale * u`.
    /// Affine subtrees are folded with compensated constant sums, so that
    /// e.g. `1 - y` with `y = 1 - u` evaluates exactly as `u`.
    pub fn reparametrize(&self, shift: f64, scale: f64) -> CoefficientExpr {
        Self::from_node(reparam_node(&self.root, shift, scale))
    }

    /// Replace every occurrence of `y` with `replacement`.
    pub fn substitute(&self, replacement: &CoefficientExpr) -> CoefficientExpr {
        Self::from_node(substitute_node(&self.root, &replacement.root))
    }
}

impl fmt::Display for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pretty())
    }
}

impl std::str::FromStr for CoefficientExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

fn node_has_var(n: &Node) -> bool {
    match n {
        Node::Const(_) => false,
        Node::Var => true,
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => node_has_var(a),
        Node::Add(a, b)
        | Node::Sub(a, b)
        | Node::Mul(a, b)
        | Node::Div(a, b)
        | Node::Call2(_, a, b) => node_has_var(a) || node_has_var(b),
    }
}

/// `(constant terms, coefficient of u)` when `n` is affine in `y`.
fn affine(n: &Node, shift: f64, scale: f64) -> Option<(Vec<f64>, f64)> {
    match n {
        Node::Const(c) => Some((vec![*c], 0.0)),
        Node::Var => Some((vec![shift], scale)),
        Node::Neg(a) => {
            let (c, k) = affine(a, shift, scale)?;
            Some((c.into_iter().map(|v| -v).collect(), -k))
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            let (mut ca, ka) = affine(a, shift, scale)?;
            let (cb, kb) = affine(b, shift, scale)?;
            let sg = if matches!(n, Node::Sub(..)) { -1.0 } else { 1.0 };
            ca.extend(cb.into_iter().map(|v| sg * v));
            Some((ca, ka + sg * kb))
        }
        Node::Mul(a, b) => {
            let (ca, ka) = affine(a, shift, scale)?;
            let (cb, kb) = affine(b, shift, scale)?;
            if ka == 0.0 {
                let f = compensated_sum(&ca);
                Some((cb.into_iter().map(|v| v * f).collect(), kb * f))
            } else if kb == 0.0 {
                let f = compensated_sum(&cb);
                Some((ca.into_iter().map(|v| v * f).collect(), ka * f))
            } else {
                None
            }
        }
        Node::Div(a, b) => {
            let (ca, ka) = affine(a, shift, scale)?;
            let (cb, kb) = affine(b, shift, scale)?;
            if kb != 0.0 {
                return None;
            }
            let f = compensated_sum(&cb);
            Some((ca.into_iter().map(|v| v / f).collect(), ka / f))
        }
        _ => None,
    }
}

fn compensated_sum(v: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn reparam_node(n: &Node, shift: f64, scale: f64) -> Node {
    if node_has_var(n) {
        if let Some((c, k)) = affine(n, shift, scale) {
            let a = compensated_sum(&c);
            let lin = if k == 1.0 {
                Node::Var
            } else {
                Node::Mul(Box::new(Node::Const(k)), Box::new(Node::Var))
            };
            return if a == 0.0 || k == 0.0 {
                if k == 0.0 {
                    Node::Const(a)
                } else {
                    lin
                }
            } else {
                Node::Add(Box::new(Node::Const(a)), Box::new(lin))
            };
        }
    }
    let r = |a: &Node| Box::new(reparam_node(a, shift, scale));
    match n {
        Node::Const(c) => Node::Const(*c),
        Node::Var => unreachable!("affine"),
        Node::Neg(a) => Node::Neg(r(a)),
        Node::Add(a, b) => Node::Add(r(a), r(b)),
        Node::Sub(a, b) => Node::Sub(r(a), r(b)),
        Node::Mul(a, b) => Node::Mul(r(a), r(b)),
        Node::Div(a, b) => Node::Div(r(a), r(b)),
        Node::Pow(a, p) => Node::Pow(r(a), *p),
        Node::Call(f, a) => Node::Call(*f, r(a)),
        Node::Call2(f, a, b) => Node::Call2(*f, r(a), r(b)),
    }
}

fn substitute_node(n: &Node, r: &Node) -> Node {
    let s = |a: &Node| Box::new(substitute_node(a, r));
    match n {
        Node::Const(c) => Node::Const(*c),
        Node::Var => r.clone(),
        Node::Neg(a) => Node::Neg(s(a)),
        Node::Add(a, b) => Node::Add(s(a), s(b)),
        Node::Sub(a, b) => Node::Sub(s(a), s(b)),
        Node::Mul(a, b) => Node::Mul(s(a), s(b)),
        Node::Div(a, b) => Node::Div(s(a), s(b)),
        Node::Pow(a, p) => Node::Pow(s(a), *p),
        Node::Call(f, a) => Node::Call(*f, s(a)),
        Node::Call2(f, a, b) => Node::Call2(*f, s(a), s(b)),
    }
}

pub(crate) fn eval_node(n: &Node, y: f64) -> Result<f64, EvalError> {
    Ok(match n {
        Node::Const(c) => *c,
        Node::Var => y,
        Node::Neg(a) => -eval_node(a, y)?,
        Node::Add(a, b) => eval_node(a, y)? + eval_node(b, y)?,
        Node::Sub(a, b) => eval_node(a, y)? - eval_node(b, y)?,
        Node::Mul(a, b) => eval_node(a, y)? * eval_node(b, y)?,
        Node::Div(a, b) => {
            let num = eval_node(a, y)?;
            let den = eval_node(b, y)?;
            if den == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            num / den
        }
        Node::Pow(a, p) => pow_checked(eval_node(a, y)?, *p)?,
        Node::Call(f, a) => {
            let v = eval_node(a, y)?;
            match f {
                Func::Exp => v.exp(),
                Func::Log => {
                    if v <= 0.0 {
                        return Err(EvalError::LogDomain(v));
                    }
                    v.ln()
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(EvalError::SqrtDomain(v));
                    }
                    v.sqrt()
                }
                Func::Abs => v.abs(),
            }
        }
        Node::Call2(f, a, b) => {
            let u = eval_node(a, y)?;
            let v = eval_node(b, y)?;
            match f {
                Func2::Min => u.min(v),
                Func2::Max => u.max(v),
            }
        }
    })
}

fn pow_checked(base: f64, p: f64) -> Result<f64, EvalError> {
    if base == 0.0 {
        return if p > 0.0 {
            Ok(0.0)
        } else if p == 0.0 {
            Ok(1.0)
        } else {
            Err(EvalError::DivisionByZero)
        };
    }
    if base < 0.0 && p.fract() != 0.0 {
        return Err(EvalError::PowDomain { base, exponent: p });
    }
    if p == 0.5 {
        return Ok(base.sqrt());
    }
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        return Ok(base.powi(p as i32));
    }
    Ok(base.powf(p))
}

// ---------------------------------------------------------------------------
// printing

fn fmt_num(c: f64) -> String {
    let s = format!("{c:?}");
    if c < 0.0 {
        format!("({s})")
    } else {
        s
    }
}

fn prec(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(..) => 3,
        Node::Pow(..) => 4,
        Node::Const(c) if *c < 0.0 => 5,
        _ => 5,
    }
}

fn wrap(n: &Node, min_prec: u8) -> String {
    let s = print_node(n);
    if prec(n) < min_prec {
        format!("({s})")
    } else {
        s
    }
}

pub(crate) fn print_node(n: &Node) -> String {
    match n {
        Node::Const(c) => fmt_num(*c),
        Node::Var => "y".to_string(),
        Node::Neg(a) => format!("-{}", wrap(a, 4)),
        Node::Add(a, b) => format!("{} + {}", wrap(a, 1), wrap(b, 2)),
        Node::Sub(a, b) => format!("{} - {}", wrap(a, 1), wrap(b, 2)),
        Node::Mul(a, b) => format!("{}*{}", wrap(a, 2), wrap(b, 3)),
        Node::Div(a, b) => format!("{}/{}", wrap(a, 2), wrap(b, 3)),
        Node::Pow(a, p) => {
            let base = wrap(a, 5);
            format!("{base}^({p:?})")
        }
        Node::Call(f, a) => {
            let name = match f {
                Func::Exp => "exp",
                Func::Log => "log",
                Func::Sqrt => "sqrt",
                Func::Abs => "abs",
            };
            format!("{name}({})", print_node(a))
        }
        Node::Call2(f, a, b) => {
            let name = match f {
                Func2::Min => "min",
                Func2::Max => "max",
            };
            format!("{name}({}, {})", print_node(a), print_node(b))
        }
    }
}

// ---------------------------------------------------------------------------
// lexing and parsing

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
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, pos));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| ParseError::Syntax {
                position: pos,
                expected: "number".into(),
                found: format!("`{s}`"),
            })?;
            out.push((Tok::Num(v), pos));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        return Err(ParseError::Syntax {
            position: pos,
            expected: "expression".into(),
            found: format!("`{c}`"),
        });
    }
    out.push((Tok::End, chars.len() + 1));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            position: self.pos(),
            expected: expected.to_string(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(match inner {
                Node::Const(c) => Node::Const(-c),
                other => Node::Neg(Box::new(other)),
            });
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let pos = self.pos();
        let p = match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                v
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Num(v) => -v,
                    _ => {
                        self.i -= 1;
                        return Err(self.unexpected("number"));
                    }
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                if node_has_var(&inner) {
                    return Err(ParseError::NonConstantExponent { position: pos });
                }
                eval_node(&inner, 0.0)
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or(ParseError::NonConstantExponent { position: pos })?
            }
            _ => return Err(self.unexpected("constant exponent")),
        };
        Ok(Node::Pow(Box::new(base), p))
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Node::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if name == "y" {
                    return Ok(Node::Var);
                }
                let unary = match name.as_str() {
                    "exp" => Some(Func::Exp),
                    "log" => Some(Func::Log),
                    "sqrt" => Some(Func::Sqrt),
                    "abs" => Some(Func::Abs),
                    _ => None,
                };
                let binary = match name.as_str() {
                    "min" => Some(Func2::Min),
                    "max" => Some(Func2::Max),
                    _ => None,
                };
                if unary.is_none() && binary.is_none() {
                    return Err(ParseError::UnknownIdentifier {
                        position: pos,
                        name,
                    });
                }
                self.expect(Tok::LParen, "`(`")?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "`)` or `,`")?;
                let expected = if unary.is_some() { 1 } else { 2 };
                if args.len() != expected {
                    return Err(ParseError::Arity {
                        position: pos,
                        name,
                        expected,
                        got: args.len(),
                    });
                }
                let mut it = args.into_iter();
                let a = Box::new(it.next().unwrap());
                Ok(match (unary, binary) {
                    (Some(f), _) => Node::Call(f, a),
                    (_, Some(f)) => Node::Call2(f, a, Box::new(it.next().unwrap())),
                    _ => unreachable!(),
                })
            }
            _ => Err(self.unexpected("number, `y`, `(` or function")),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<CoefficientExpr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, i: 0 };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("operator or end of input"));
    }
    Ok(CoefficientExpr {
        root,
        source_text: text.to_string(),
    })
}

pub fn eval_expr(e: &CoefficientExpr, y: f64) -> Result<f64, EvalError> {
    e.eval(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> CoefficientExpr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn sqrt_smoke() {
        assert_eq!(*p("sqrt(y)").root(), Node::Call(Func::Sqrt, Box::new(Node::Var)));
    }

    #[test]
    fn logistic_drift_tree() {
        let e = p("y*( -1 - 0.1*y)");
        let expected = Node::Mul(
            Box::new(Node::Var),
            Box::new(Node::Sub(
                Box::new(Node::Const(-1.0)),
                Box::new(Node::Mul(Box::new(Node::Const(0.1)), Box::new(Node::Var))),
            )),
        );
        assert_eq!(*e.root(), expected);
        assert!((e.eval(2.0).unwrap() - 2.0 * (-1.0 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn double_caret_is_syntax_error_at_three() {
        let err = parse_expr("y^^2").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        assert_eq!(err.position(), Some(3));
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(parse_expr("foo(y)"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse_expr("x + 1"), Err(ParseError::UnknownIdentifier { .. })));
        assert!(matches!(parse_expr("exp(y, 2)"), Err(ParseError::Arity { .. })));
        assert!(matches!(parse_expr("min(y)"), Err(ParseError::Arity { .. })));
        assert!(matches!(parse_expr("y^y"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_expr("2^(y)"), Err(ParseError::NonConstantExponent { .. })));
        assert!(matches!(parse_expr("(y"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_expr("  "), Err(ParseError::Empty)));
        assert!(matches!(parse_expr("y $ 2"), Err(ParseError::Syntax { position: 3, .. })));
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("y^(0.3)").eval(0.0).unwrap(), 0.0);
        assert_eq!(p("exp(-2*y)").eval(0.0).unwrap(), 1.0);
        assert_eq!(p("1/y").eval(0.0), Err(EvalError::DivisionByZero));
        assert!(matches!(p("log(y)").eval(0.0), Err(EvalError::LogDomain(_))));
        assert!(matches!(p("sqrt(y)").eval(-1.0), Err(EvalError::SqrtDomain(_))));
        assert!(matches!(p("y^(0.5)").eval(-1.0), Err(EvalError::PowDomain { .. })));
        assert_eq!(p("y^2").eval(-3.0).unwrap(), 9.0);
        assert!(matches!(p("exp(y)").eval(1000.0), Err(EvalError::NonFinite(_))));
        assert_eq!(p("min(1, max(0, 2 - 2*y))").eval(0.75).unwrap(), 0.5);
        assert_eq!(p("-y^2").eval(3.0).unwrap(), -9.0);
        assert_eq!(p("2^-1").eval(0.0).unwrap(), 0.5);
        assert_eq!(p("1.5e2 + 1E-1").eval(0.0).unwrap(), 150.1);
    }

    #[test]
    fn print_reparse_examples() {
        for s in [
            "y*( -1 - 0.1*y)",
            "2*y^(0.5)/ (1 - y)",
            "-(y - 1)^2",
            "-y^(-0.5)",
            "min(1, max(0, 2 - 2*y))",
            "1/(y*log(1/y)^2)",
            "exp(-2*0.5*y) - -3",
            "y - (y - y)",
            "y/(y/y)",
            "(-2)^(3.0)",
        ] {
            let e = p(s);
            let again = p(&e.pretty());
            assert_eq!(e.root(), again.root(), "{s} -> {}", e.pretty());
        }
    }

    #[test]
    fn reparametrize_keeps_distance_exact() {
        let e = p("sqrt(y*(1-y))").reparametrize(1.0, -1.0);
        let u = 1e-30;
        assert!((e.eval(u).unwrap() - u.sqrt()).abs() <= 1e-15 * u.sqrt());
        let e = p("1/(1 - y) + (y - 1)*2").reparametrize(1.0, -1.0);
        assert_eq!(e.eval(1e-20).unwrap(), 1e20 - 2e-20);
        let e = p("y^2 - 3").reparametrize(2.0, 0.5);
        assert_eq!(e.eval(2.0).unwrap(), 6.0);
    }

    #[test]
    fn substitute_mirrors() {
        let e = p("1/(1 - y)");
        let m = e.substitute(&p("1 - y"));
        assert!((m.eval(0.25).unwrap() - 4.0).abs() < 1e-12);
    }
}
