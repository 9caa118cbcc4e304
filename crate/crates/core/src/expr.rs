//! Small arithmetic expression language for metric coefficients.
//!
//! Supports `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! functions `sin cos tan exp log sqrt`, and variables `x1 .. x9` with `xn`
//! aliased to the last coordinate.  Parsing is precedence climbing over a
//! hand-rolled lexer; errors carry line and column.  Expressions can be
//! differentiated symbolically, which is what gives scenario metrics their
//! analytic derivative supply.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Ident(usize), // interned
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    idents: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, line: usize, col0: usize) -> Self {
        Lexer {
            src,
            chars: src.chars().collect(),
            pos: 0,
            line,
            col: col0,
            idents: Vec::new(),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            col: self.col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied();
        if let Some(c) = c {
            self.pos += 1;
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        c
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn tokens(mut self) -> Result<(Vec<Spanned>, Vec<String>)> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            let (line, col) = (self.line, self.col);
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            let tok = match c {
                '+' => {
                    self.bump();
                    Tok::Plus
                }
                '-' => {
                    self.bump();
                    Tok::Minus
                }
                '*' => {
                    self.bump();
                    Tok::Star
                }
                '/' => {
                    self.bump();
                    Tok::Slash
                }
                '^' => {
                    self.bump();
                    Tok::Caret
                }
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                c if c.is_ascii_digit() || c == '.' => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c.is_ascii_digit() || c == '.' {
                            self.bump();
                        } else if (c == 'e' || c == 'E')
                            && self
                                .chars
                                .get(self.pos + 1)
                                .is_some_and(|n| n.is_ascii_digit() || *n == '+' || *n == '-')
                        {
                            self.bump();
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let text: String = self.chars[start..self.pos].iter().collect();
                    let v: f64 = text
                        .parse()
                        .map_err(|_| self.err(format!("bad number literal `{text}`")))?;
                    Tok::Num(v)
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let text: String = self.chars[start..self.pos].iter().collect();
                    let id = self.idents.iter().position(|s| *s == text).unwrap_or_else(|| {
                        self.idents.push(text);
                        self.idents.len() - 1
                    });
                    Tok::Ident(id)
                }
                other => {
                    return Err(Error::Parse {
                        line,
                        col,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            };
            out.push(Spanned { tok, line, col });
        }
        let _ = self.src;
        Ok((out, self.idents))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn eval(&self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

/// Expression tree over variables `x1 .. xn` (0-based indices internally).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

struct Parser {
    toks: Vec<Spanned>,
    idents: Vec<String>,
    pos: usize,
    n_vars: usize,
    end_line: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).map(|s| s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|s| (s.line, s.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn err_here(&self, msg: impl Into<String>) -> Error {
        let (line, col) = self.here();
        Error::Parse {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_here(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Arc::new(lhs), Arc::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Arc::new(lhs), Arc::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Arc::new(lhs), Arc::new(rhs));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Arc::new(lhs), Arc::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.bump();
                Ok(Expr::Neg(Arc::new(self.unary()?)))
            }
            Some(Tok::Plus) => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(Tok::Caret) {
            self.bump();
            // right associative; exponent may carry a sign
            let exp = self.unary()?;
            Ok(Expr::Pow(Arc::new(base), Arc::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Ident(id)) => {
                let name = self.idents[id].clone();
                if self.peek() == Some(Tok::LParen) {
                    let func = Func::from_name(&name)
                        .ok_or_else(|| self.err_here(format!("unknown function `{name}`")))?;
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "closing parenthesis")?;
                    Ok(Expr::Call(func, Arc::new(arg)))
                } else {
                    self.variable(&name)
                }
            }
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "closing parenthesis")?;
                Ok(e)
            }
            _ => Err(self.err_here("expected a number, variable, function or `(`")),
        }
    }

    fn variable(&mut self, name: &str) -> Result<Expr> {
        if name == "xn" {
            return Ok(Expr::Var(self.n_vars - 1));
        }
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(k) = rest.parse::<usize>() {
                if k >= 1 && k <= self.n_vars {
                    return Ok(Expr::Var(k - 1));
                }
                return Err(self.err_here(format!(
                    "variable `{name}` out of range 1..={}",
                    self.n_vars
                )));
            }
        }
        Err(self.err_here(format!("unknown identifier `{name}`")))
    }
}

/// Parses one expression over n variables.  `line` and `col0` locate the
/// text inside a larger document so errors point at the right place.
pub fn parse_at(src: &str, n_vars: usize, line: usize, col0: usize) -> Result<Expr> {
    let end_col = col0 + src.chars().count();
    let (toks, idents) = Lexer::new(src, line, col0).tokens()?;
    let mut p = Parser {
        toks,
        idents,
        pos: 0,
        n_vars,
        end_line: line,
        end_col,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err_here("trailing input after expression"));
    }
    Ok(simplify(&e))
}

pub fn parse(src: &str, n_vars: usize) -> Result<Expr> {
    parse_at(src, n_vars, 1, 1)
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(k) => x[*k],
            Expr::Neg(e) => -e.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Call(f, e) => f.eval(e.eval(x)),
        }
    }

    /// Symbolic partial derivative with respect to variable `k`.
    pub fn diff(&self, k: usize) -> Expr {
        let d = match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(j) => Expr::Num(if *j == k { 1.0 } else { 0.0 }),
            Expr::Neg(e) => Expr::Neg(Arc::new(e.diff(k))),
            Expr::Add(a, b) => Expr::Add(Arc::new(a.diff(k)), Arc::new(b.diff(k))),
            Expr::Sub(a, b) => Expr::Sub(Arc::new(a.diff(k)), Arc::new(b.diff(k))),
            Expr::Mul(a, b) => Expr::Add(
                Arc::new(Expr::Mul(Arc::new(a.diff(k)), b.clone())),
                Arc::new(Expr::Mul(a.clone(), Arc::new(b.diff(k)))),
            ),
            Expr::Div(a, b) => Expr::Div(
                Arc::new(Expr::Sub(
                    Arc::new(Expr::Mul(Arc::new(a.diff(k)), b.clone())),
                    Arc::new(Expr::Mul(a.clone(), Arc::new(b.diff(k)))),
                )),
                Arc::new(Expr::Mul(b.clone(), b.clone())),
            ),
            Expr::Pow(a, b) => match &**b {
                // constant exponent: c a^(c-1) a'
                Expr::Num(c) => Expr::Mul(
                    Arc::new(Expr::Mul(
                        Arc::new(Expr::Num(*c)),
                        Arc::new(Expr::Pow(a.clone(), Arc::new(Expr::Num(c - 1.0)))),
                    )),
                    Arc::new(a.diff(k)),
                ),
                // general case via exp(b log a)
                _ => {
                    let rewritten = Expr::Call(
                        Func::Exp,
                        Arc::new(Expr::Mul(
                            b.clone(),
                            Arc::new(Expr::Call(Func::Log, a.clone())),
                        )),
                    );
                    rewritten.diff(k)
                }
            },
            Expr::Call(f, e) => {
                let inner = Arc::new(e.diff(k));
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, e.clone()),
                    Func::Cos => Expr::Neg(Arc::new(Expr::Call(Func::Sin, e.clone()))),
                    Func::Tan => {
                        // 1 / cos²
                        Expr::Div(
                            Arc::new(Expr::Num(1.0)),
                            Arc::new(Expr::Pow(
                                Arc::new(Expr::Call(Func::Cos, e.clone())),
                                Arc::new(Expr::Num(2.0)),
                            )),
                        )
                    }
                    Func::Exp => Expr::Call(Func::Exp, e.clone()),
                    Func::Log => Expr::Div(Arc::new(Expr::Num(1.0)), e.clone()),
                    Func::Sqrt => Expr::Div(
                        Arc::new(Expr::Num(0.5)),
                        Arc::new(Expr::Call(Func::Sqrt, e.clone())),
                    ),
                };
                Expr::Mul(Arc::new(outer), inner)
            }
        };
        simplify(&d)
    }
}

fn num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(v) => Some(*v),
        _ => None,
    }
}

/// Constant folding plus 0/1 elimination; keeps derivative trees small.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => {
            let a = simplify(a);
            match num(&a) {
                Some(v) => Expr::Num(-v),
                None => Expr::Neg(Arc::new(a)),
            }
        }
        Expr::Add(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (num(&a), num(&b)) {
                (Some(x), Some(y)) => Expr::Num(x + y),
                (Some(0.0), None) => b,
                (None, Some(0.0)) => a,
                _ => Expr::Add(Arc::new(a), Arc::new(b)),
            }
        }
        Expr::Sub(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (num(&a), num(&b)) {
                (Some(x), Some(y)) => Expr::Num(x - y),
                (None, Some(0.0)) => a,
                (Some(0.0), None) => Expr::Neg(Arc::new(b)),
                _ => Expr::Sub(Arc::new(a), Arc::new(b)),
            }
        }
        Expr::Mul(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (num(&a), num(&b)) {
                (Some(x), Some(y)) => Expr::Num(x * y),
                (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
                (Some(1.0), None) => b,
                (None, Some(1.0)) => a,
                _ => Expr::Mul(Arc::new(a), Arc::new(b)),
            }
        }
        Expr::Div(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (num(&a), num(&b)) {
                (Some(x), Some(y)) if y != 0.0 => Expr::Num(x / y),
                (Some(0.0), None) => Expr::Num(0.0),
                (None, Some(1.0)) => a,
                _ => Expr::Div(Arc::new(a), Arc::new(b)),
            }
        }
        Expr::Pow(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            match (num(&a), num(&b)) {
                (Some(x), Some(y)) => Expr::Num(x.powf(y)),
                (None, Some(1.0)) => a,
                (None, Some(0.0)) => Expr::Num(1.0),
                _ => Expr::Pow(Arc::new(a), Arc::new(b)),
            }
        }
        Expr::Call(f, a) => {
            let a = simplify(a);
            match num(&a) {
                Some(v) => Expr::Num(f.eval(v)),
                None => Expr::Call(*f, Arc::new(a)),
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(out, "({v})")
                } else {
                    write!(out, "{v}")
                }
            }
            Expr::Var(k) => write!(out, "x{}", k + 1),
            Expr::Neg(e) => write!(out, "(-{e})"),
            Expr::Add(a, b) => write!(out, "({a} + {b})"),
            Expr::Sub(a, b) => write!(out, "({a} - {b})"),
            Expr::Mul(a, b) => write!(out, "({a} * {b})"),
            Expr::Div(a, b) => write!(out, "({a} / {b})"),
            Expr::Pow(a, b) => write!(out, "({a} ^ {b})"),
            Expr::Call(f, e) => write!(out, "{}({e})", f.name()),
        }
    }
}
