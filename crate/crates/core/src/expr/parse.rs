use super::{Expr, ExprError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, line: l0, col: c0 });
            i += 1;
            col += 1;
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
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| ExprError::Syntax {
                line: l0,
                col: c0,
                msg: format!("malformed number `{s}`"),
            })?;
            col += i - start;
            out.push(Token { tok: Tok::Num(v), line: l0, col: c0 });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: l0,
                col: c0,
            });
            continue;
        }
        return Err(ExprError::Syntax {
            line: l0,
            col: c0,
            msg: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token { tok: Tok::End, line, col });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    known: Option<&'a [&'a str]>,
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::End {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, t: &Token, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprError> {
        let t = self.bump();
        if t.tok == tok {
            Ok(())
        } else {
            Err(self.syntax(&t, format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            if let Tok::Num(v) = self.peek().tok {
                self.bump();
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let t = self.bump();
        match t.tok.clone() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek().tok != Tok::RParen {
                        args.push(self.expr()?);
                        while self.peek().tok == Tok::Comma {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.expect(Tok::RParen, "`)` or `,`")?;
                    return call(&name, args, &t);
                }
                if let Some(known) = self.known {
                    if !known.contains(&name.as_str()) {
                        return Err(ExprError::UnknownIdentifier {
                            name,
                            line: t.line,
                            col: t.col,
                        });
                    }
                }
                Ok(Expr::Var(name))
            }
            other => Err(self.syntax(&t, format!("expected an operand, found {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(n) => format!("`{n}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::End => "end of input".into(),
    }
}

fn call(name: &str, mut args: Vec<Expr>, at: &Token) -> Result<Expr, ExprError> {
    let expected = match name {
        "sqrt" | "exp" | "sin" | "cos" => 1,
        "min" | "max" => 2,
        "glog" => 4,
        _ => {
            return Err(ExprError::UnknownFunction {
                name: name.to_string(),
                line: at.line,
                col: at.col,
            })
        }
    };
    if args.len() != expected {
        return Err(ExprError::Arity {
            name: name.to_string(),
            expected,
            found: args.len(),
            line: at.line,
            col: at.col,
        });
    }
    let b = |e: Expr| Box::new(e);
    let mut it = args.drain(..);
    let mut next = || it.next().expect("arity checked");
    Ok(match name {
        "sqrt" => Expr::Sqrt(b(next())),
        "exp" => Expr::Exp(b(next())),
        "sin" => Expr::Sin(b(next())),
        "cos" => Expr::Cos(b(next())),
        "min" => Expr::Min(b(next()), b(next())),
        "max" => Expr::Max(b(next()), b(next())),
        _ => {
            let bad = |msg: &str| ExprError::InvalidGlog {
                line: at.line,
                col: at.col,
                msg: msg.to_string(),
            };
            let mut lit = || match next() {
                Expr::Const(c) => Ok(c),
                _ => Err(bad("the first three arguments must be numeric literals")),
            };
            let (a, hi, rate) = (lit()?, lit()?, lit()?);
            if !(a < hi) {
                return Err(bad(&format!("need a < b, got a = {a}, b = {hi}")));
            }
            if !(rate > 0.0) {
                return Err(bad(&format!("need rate > 0, got {rate}")));
            }
            Expr::Glog {
                a,
                b: hi,
                rate,
                arg: b(next()),
            }
        }
    })
}

fn run(text: &str, known: Option<&[&str]>) -> Result<Expr, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, known };
    let e = p.expr()?;
    let t = p.peek().clone();
    if t.tok != Tok::End {
        return Err(p.syntax(&t, format!("unexpected {}", describe(&t.tok))));
    }
    Ok(e)
}

/// Parses `text`, accepting any identifier as a variable reference.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    run(text, None)
}

/// Parses `text`, rejecting variable references outside `known`.
pub fn parse_with(text: &str, known: &[&str]) -> Result<Expr, ExprError> {
    run(text, Some(known))
}
