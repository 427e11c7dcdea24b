//! Expression language for concrete module right-hand sides.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = term , { ("+" | "-") , term } ;
//! term    = unary , { ("*" | "/") , unary } ;
//! unary   = "-" , unary | primary ;
//! primary = number | ident | call | "(" , expr , ")" ;
//! call    = ident , "(" , [ expr , { "," , expr } ] , ")" ;
//! number  = digits , [ "." , digits ] , [ ("e" | "E") , [ "+" | "-" ] , digits ]
//!         | "." , digits , [ exponent ] ;
//! ident   = letter | "_" , { letter | digit | "_" | "'" } ;
//! ```
//!
//! Built-in functions: `sqrt(e)`, `exp(e)`, `sin(e)`, `cos(e)`, `min(a, b)`,
//! `max(a, b)` and `glog(a, b, rate, e)`, the generalized logistic
//! `a + (b − a) / (1 + exp(−rate·(e − (a + b)/2)))`. The first three `glog`
//! arguments must be numeric literals with `a < b` and `rate > 0`. Affine
//! gains are written with ordinary arithmetic (`3*x`, `x/3`).
//!
//! A `-` immediately followed by a numeric literal is folded into a negative
//! constant.

mod interval;
mod oracle;
mod parse;
mod program;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use interval::Interval;
pub(crate) use interval::{add_up, sub_down};
pub use oracle::{Oracle, OracleError, OracleKind, MONOTONE_SAMPLE_PAIRS};
pub use parse::{parse, parse_with};
pub use program::Program;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("unknown function `{name}` at {line}:{col}")]
    UnknownFunction { name: String, line: usize, col: usize },
    #[error("`{name}` takes {expected} argument(s), found {found} at {line}:{col}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        line: usize,
        col: usize,
    },
    #[error("invalid glog parameters at {line}:{col}: {msg}")]
    InvalidGlog { line: usize, col: usize, msg: String },
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sqrt(Box<Expr>),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Glog {
        a: f64,
        b: f64,
        rate: f64,
        arg: Box<Expr>,
    },
}

/// Result of point evaluation. `Undefined` marks partiality (square root of
/// a negative, division by zero) and becomes blocking downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Real(f64),
    Undefined,
}

impl Value {
    pub fn real(self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(x),
            Value::Undefined => None,
        }
    }
}

pub fn glog(a: f64, b: f64, rate: f64, x: f64) -> f64 {
    a + (b - a) / (1.0 + (-rate * (x - (a + b) / 2.0)).exp())
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Names of referenced variables, in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(n) = e {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Sqrt(a) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => a.visit(f),
            Expr::Glog { arg, .. } => arg.visit(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Replaces variables by expressions (used to inline latent modules).
    pub fn substitute(&self, with: &HashMap<String, Expr>) -> Expr {
        let s = |e: &Expr| Box::new(e.substitute(with));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(n) => with.get(n).cloned().unwrap_or_else(|| Expr::Var(n.clone())),
            Expr::Neg(a) => Expr::Neg(s(a)),
            Expr::Add(a, b) => Expr::Add(s(a), s(b)),
            Expr::Sub(a, b) => Expr::Sub(s(a), s(b)),
            Expr::Mul(a, b) => Expr::Mul(s(a), s(b)),
            Expr::Div(a, b) => Expr::Div(s(a), s(b)),
            Expr::Sqrt(a) => Expr::Sqrt(s(a)),
            Expr::Exp(a) => Expr::Exp(s(a)),
            Expr::Sin(a) => Expr::Sin(s(a)),
            Expr::Cos(a) => Expr::Cos(s(a)),
            Expr::Min(a, b) => Expr::Min(s(a), s(b)),
            Expr::Max(a, b) => Expr::Max(s(a), s(b)),
            Expr::Glog { a, b, rate, arg } => Expr::Glog {
                a: *a,
                b: *b,
                rate: *rate,
                arg: s(arg),
            },
        }
    }

    /// IEEE double evaluation under `env`.
    pub fn eval(&self, env: &HashMap<String, f64>) -> Result<Value, ExprError> {
        let names = self.variables();
        let mut values = Vec::with_capacity(names.len());
        for n in &names {
            values.push(*env.get(n).ok_or_else(|| ExprError::UnboundVariable(n.clone()))?);
        }
        let p = Program::compile(self, &names)?;
        Ok(p.eval(&values))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            _ => 4,
        }
    }
}

fn fmt_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr, p: u8| -> fmt::Result {
            fmt_child(f, a, a.precedence() < p)?;
            write!(f, " {op} ")?;
            // Right operands of the same precedence need parentheses: a - (b - c).
            fmt_child(f, b, b.precedence() <= p)
        };
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                // `-(2.0)` stays a negation; `-2.0` would fold into a literal.
                fmt_child(f, a, a.precedence() < 3 || matches!(**a, Expr::Const(_)))
            }
            Expr::Add(a, b) => bin(f, a, "+", b, 1),
            Expr::Sub(a, b) => bin(f, a, "-", b, 1),
            Expr::Mul(a, b) => bin(f, a, "*", b, 2),
            Expr::Div(a, b) => bin(f, a, "/", b, 2),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Glog { a, b, rate, arg } => write!(f, "glog({a:?}, {b:?}, {rate:?}, {arg})"),
        }
    }
}

#[cfg(test)]
mod tests;
