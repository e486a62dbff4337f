//! Arithmetic expression language for user-defined kernels.
//!
//! Grammar (whitespace-insensitive, positions counted in characters):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-')* power
//! power  := atom ('^' unary)?              right-associative
//! atom   := number | name | '(' expr ')' | ('exp'|'sin'|'cos') '(' expr ')'
//! name   := 'x' | 'y' | 'w' | 'z' | 'pi' | 'i'
//! number := digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
//! ```
//!
//! All arithmetic is complex; `^` is the principal complex power.

use num_complex::Complex64;

use super::KernelError;

/// Parsed expression tree. Evaluation is pure.
#[derive(Clone, Debug)]
pub enum Ast {
    Const(Complex64),
    /// Coordinate index into `[x, y, w, z]`.
    Var(usize),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
    Neg(Box<Ast>),
    Exp(Box<Ast>),
    Sin(Box<Ast>),
    Cos(Box<Ast>),
}

impl Ast {
    pub fn eval(&self, coords: [f64; 4]) -> Complex64 {
        match self {
            Ast::Const(c) => *c,
            Ast::Var(i) => Complex64::new(coords[*i], 0.0),
            Ast::Add(a, b) => a.eval(coords) + b.eval(coords),
            Ast::Sub(a, b) => a.eval(coords) - b.eval(coords),
            Ast::Mul(a, b) => a.eval(coords) * b.eval(coords),
            Ast::Div(a, b) => a.eval(coords) / b.eval(coords),
            Ast::Pow(a, b) => a.eval(coords).powc(b.eval(coords)),
            Ast::Neg(a) => -a.eval(coords),
            Ast::Exp(a) => a.eval(coords).exp(),
            Ast::Sin(a) => a.eval(coords).sin(),
            Ast::Cos(a) => a.eval(coords).cos(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn err<T>(position: usize, message: impl Into<String>) -> Result<T, KernelError> {
    Err(KernelError::Parse {
        position,
        message: message.into(),
    })
}

fn tokenize(src: &str) -> Result<(Vec<(Tok, usize)>, usize), KernelError> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push((Tok::Plus, start));
                i += 1;
            }
            '-' | '\u{2212}' => {
                toks.push((Tok::Minus, start));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Star, start));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, start));
                i += 1;
            }
            '^' => {
                toks.push((Tok::Caret, start));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, start));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, start));
                i += 1;
            }
            '0'..='9' => {
                let mut text = String::new();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    text.push(chars[i]);
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    text.push('.');
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        text.push(chars[i]);
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        text.extend(chars[i..j].iter());
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            text.push(chars[i]);
                            i += 1;
                        }
                    }
                }
                match text.parse::<f64>() {
                    Ok(v) => toks.push((Tok::Num(v), start)),
                    Err(_) => return err(start, format!("malformed number `{text}`")),
                }
            }
            c if c.is_ascii_alphabetic() => {
                let mut text = String::new();
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    text.push(chars[i]);
                    i += 1;
                }
                toks.push((Tok::Name(text), start));
            }
            other => return err(start, format!("unexpected character `{other}`")),
        }
    }
    Ok((toks, chars.len()))
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    end: usize,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn advance(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), KernelError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            err(self.here(), format!("expected {what}"))
        }
    }

    fn parse_expr(&mut self) -> Result<Ast, KernelError> {
        let mut node = self.parse_term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    node = Ast::Add(Box::new(node), Box::new(self.parse_term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    node = Ast::Sub(Box::new(node), Box::new(self.parse_term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn parse_term(&mut self) -> Result<Ast, KernelError> {
        let mut node = self.parse_unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    node = Ast::Mul(Box::new(node), Box::new(self.parse_unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    node = Ast::Div(Box::new(node), Box::new(self.parse_unary()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Ast, KernelError> {
        let mut negate = false;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                }
                Some(Tok::Minus) => {
                    negate = !negate;
                    self.pos += 1;
                }
                _ => break,
            }
        }
        let node = self.parse_power()?;
        Ok(if negate { Ast::Neg(Box::new(node)) } else { node })
    }

    fn parse_power(&mut self) -> Result<Ast, KernelError> {
        let base = self.parse_atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exponent = self.parse_unary()?;
            Ok(Ast::Pow(Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn parse_atom(&mut self) -> Result<Ast, KernelError> {
        let at = self.here();
        match self.advance() {
            Some(Tok::Num(v)) => Ok(Ast::Const(Complex64::new(v, 0.0))),
            Some(Tok::Name(name)) => match name.as_str() {
                "x" => Ok(Ast::Var(0)),
                "y" => Ok(Ast::Var(1)),
                "w" => Ok(Ast::Var(2)),
                "z" => Ok(Ast::Var(3)),
                "pi" => Ok(Ast::Const(Complex64::new(std::f64::consts::PI, 0.0))),
                "i" => Ok(Ast::Const(Complex64::new(0.0, 1.0))),
                "exp" | "sin" | "cos" => {
                    self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                    let arg = Box::new(self.parse_expr()?);
                    self.expect(Tok::RParen, "`)` closing the function argument")?;
                    Ok(match name.as_str() {
                        "exp" => Ast::Exp(arg),
                        "sin" => Ast::Sin(arg),
                        _ => Ast::Cos(arg),
                    })
                }
                other => err(at, format!("unknown identifier `{other}`")),
            },
            Some(Tok::LParen) => {
                let inner = self.parse_expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            _ => err(at, "expected a number, name or parenthesized expression"),
        }
    }
}

/// Parses the expression language into an evaluation tree. Errors carry the
/// character position they refer to.
pub fn parse_expression(src: &str) -> Result<Ast, KernelError> {
    let (toks, end) = tokenize(src)?;
    let mut parser = Parser { toks, end, pos: 0 };
    let ast = parser.parse_expr()?;
    if parser.pos < parser.toks.len() {
        return err(parser.here(), "unexpected trailing input");
    }
    Ok(ast)
}
