//! Arithmetic expression parsing and evaluation.
//!
//! Coefficients, data and order weights are given as text in the run
//! configuration, so problems can be set up without recompiling. The
//! grammar is small and LL(1):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?            // right-associative
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`. There is no
//! implicit multiplication. Built-in functions: `sin`, `cos`, `exp`,
//! `min`, `max` and the closed-interval indicator `chi(a, b, v)`, which
//! is 1 exactly when `a <= v <= b`.

use std::fmt;
use thiserror::Error;

/// Binary operators in increasing binding strength: `+ -`, `* /`, `^`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Built-in function names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Min,
    Max,
    Chi,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "chi" => Some(Func::Chi),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Min => "min",
            Func::Max => "max",
            Func::Chi => "chi",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Sin | Func::Cos | Func::Exp => 1,
            Func::Min | Func::Max => 2,
            Func::Chi => 3,
        }
    }
}

/// Expression tree. Variables are arbitrary identifiers; by convention
/// the solvers bind `x`, `t` and `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(String),
    Neg(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Vec<Ast>),
}

/// A parsed, immutable expression. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    ast: Ast,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: unexpected character `{ch}`")]
    UnexpectedChar { offset: usize, ch: char },
    #[error("syntax error at byte {offset}: {what}")]
    Unexpected { offset: usize, what: String },
    #[error("syntax error at byte {offset}: invalid number literal")]
    BadNumber { offset: usize },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("function `{name}` takes {expected} argument(s), got {got} (byte {offset})")]
    WrongArity {
        offset: usize,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(String),
}

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
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' | '(' | ')' | ',' => {
                let tok = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => Tok::Comma,
                };
                toks.push(Token { tok, offset: i });
                i += 1;
            }
            '0'..='9' => {
                let start = i;
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
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::BadNumber { offset: start })?;
                toks.push(Token {
                    tok: Tok::Num(value),
                    offset: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push(Token {
                    tok: Tok::Ident(src[start..i].to_string()),
                    offset: start,
                });
            }
            other => {
                return Err(ParseError::UnexpectedChar {
                    offset: i,
                    ch: other,
                })
            }
        }
    }
    toks.push(Token {
        tok: Tok::Eof,
        offset: src.len(),
    });
    Ok(toks)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        if &self.peek().tok == want {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Unexpected {
                offset: self.peek().offset,
                what: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Ast, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Ast::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Ast, ParseError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            let inner = self.factor()?;
            return Ok(Ast::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exp = self.factor()?;
            return Ok(Ast::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Ast, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Ast::Num(v)),
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while self.peek().tok == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(&Tok::RParen, "`)`")?;
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownFunction {
                        offset: t.offset,
                        name: name.clone(),
                    })?;
                    if args.len() != func.arity() {
                        return Err(ParseError::WrongArity {
                            offset: t.offset,
                            name: name.clone(),
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(Ast::Call(func, args))
                } else {
                    Ok(Ast::Var(name))
                }
            }
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            other => Err(ParseError::Unexpected {
                offset: t.offset,
                what: format!("unexpected token {other:?}"),
            }),
        }
    }
}

impl Expr {
    /// Parse an expression from text.
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        if src.trim().is_empty() {
            return Err(ParseError::Empty);
        }
        let toks = tokenize(src)?;
        let mut p = Parser { toks, pos: 0 };
        let ast = p.expr()?;
        if p.peek().tok != Tok::Eof {
            return Err(ParseError::Unexpected {
                offset: p.peek().offset,
                what: "trailing input".to_string(),
            });
        }
        Ok(Expr { ast })
    }

    /// Evaluate with the given variable bindings. Every free variable
    /// must be bound; later bindings shadow earlier ones.
    pub fn eval(&self, bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
        eval_node(&self.ast, bindings)
    }

    /// Convenience for single-variable expressions.
    pub fn eval1(&self, name: &str, value: f64) -> Result<f64, EvalError> {
        self.eval(&[(name, value)])
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }
}

fn eval_node(ast: &Ast, bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
    match ast {
        Ast::Num(v) => Ok(*v),
        Ast::Var(name) => bindings
            .iter()
            .rev()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| EvalError::UnboundVariable(name.clone())),
        Ast::Neg(inner) => Ok(-eval_node(inner, bindings)?),
        Ast::Bin(op, l, r) => {
            let a = eval_node(l, bindings)?;
            let b = eval_node(r, bindings)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => {
                    if a == 0.0 && b < 0.0 {
                        return Err(EvalError::Domain("0 raised to a negative power".into()));
                    }
                    let v = a.powf(b);
                    if v.is_nan() && !a.is_nan() && !b.is_nan() {
                        return Err(EvalError::Domain(format!("{a}^{b} is undefined")));
                    }
                    Ok(v)
                }
            }
        }
        Ast::Call(func, args) => {
            let mut vals = [0.0f64; 3];
            for (i, arg) in args.iter().enumerate() {
                vals[i] = eval_node(arg, bindings)?;
            }
            Ok(match func {
                Func::Sin => vals[0].sin(),
                Func::Cos => vals[0].cos(),
                Func::Exp => vals[0].exp(),
                Func::Min => vals[0].min(vals[1]),
                Func::Max => vals[0].max(vals[1]),
                // closed interval on both ends
                Func::Chi => {
                    if vals[0] <= vals[2] && vals[2] <= vals[1] {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
        }
    }
}

fn prec(ast: &Ast) -> u8 {
    match ast {
        Ast::Num(_) | Ast::Var(_) | Ast::Call(..) => 5,
        Ast::Bin(BinOp::Pow, ..) => 4,
        Ast::Neg(_) => 3,
        Ast::Bin(BinOp::Mul, ..) | Ast::Bin(BinOp::Div, ..) => 2,
        Ast::Bin(BinOp::Add, ..) | Ast::Bin(BinOp::Sub, ..) => 1,
    }
}

fn fmt_prec(ast: &Ast, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
    let wrap = prec(ast) < min_prec;
    if wrap {
        write!(f, "(")?;
    }
    match ast {
        Ast::Num(v) => write!(f, "{v}")?,
        Ast::Var(name) => write!(f, "{name}")?,
        Ast::Neg(inner) => {
            write!(f, "-")?;
            fmt_prec(inner, f, 3)?;
        }
        Ast::Bin(op, l, r) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", 1, 2),
                BinOp::Sub => (" - ", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                BinOp::Pow => ("^", 5, 3),
            };
            fmt_prec(l, f, lp)?;
            write!(f, "{sym}")?;
            fmt_prec(r, f, rp)?;
        }
        Ast::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                fmt_prec(arg, f, 0)?;
            }
            write!(f, ")")?;
        }
    }
    if wrap {
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(&self.ast, f, 0)
    }
}
