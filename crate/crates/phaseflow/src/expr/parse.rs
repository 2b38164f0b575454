//! Recursive-descent parser for observable expressions.
//!
//! See the module-level grammar in [`super`]. Errors carry the byte offset of
//! the offending token.

use thiserror::Error;

use super::{Func, Node, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable `{name}` at position {pos} out of range for dimension {dim}")]
    VariableOutOfRange { pos: usize, name: String, dim: usize },
    #[error("unknown function `{name}` at position {pos}")]
    UnknownFunction { pos: usize, name: String },
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
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
                {
                    end += 1;
                }
                // optional exponent
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    let mut e = end + 1;
                    if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                        e += 1;
                    }
                    if e < self.src.len() && self.src[e].is_ascii_digit() {
                        end = e;
                        while end < self.src.len() && self.src[end].is_ascii_digit() {
                            end += 1;
                        }
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("invalid number `{text}`"),
                })?;
                self.pos = end;
                Tok::Num(value)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                self.pos = end;
                Tok::Ident(text.to_string())
            }
            other => {
                return Err(ParseError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok((tok, start))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    dim: usize,
}

pub fn parse(text: &str, dim: usize) -> Result<Node, ParseError> {
    let mut lexer = Lexer::new(text);
    let mut toks = Vec::new();
    loop {
        let (tok, pos) = lexer.next()?;
        let end = tok == Tok::Eof;
        toks.push((tok, pos));
        if end {
            break;
        }
    }
    let mut parser = Parser { toks, idx: 0, dim };
    let node = parser.expr()?;
    let (tok, pos) = parser.peek();
    if tok != &Tok::Eof {
        return Err(ParseError::Syntax {
            pos,
            msg: format!("unexpected trailing input `{}`", describe(tok)),
        });
    }
    Ok(node)
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => v.to_string(),
        Tok::Ident(s) => s.clone(),
        Tok::Plus => "+".into(),
        Tok::Minus => "-".into(),
        Tok::Star => "*".into(),
        Tok::Slash => "/".into(),
        Tok::Caret => "^".into(),
        Tok::LParen => "(".into(),
        Tok::RParen => ")".into(),
        Tok::Eof => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> (&Tok, usize) {
        let (t, p) = &self.toks[self.idx];
        (t, *p)
    }

    fn bump(&mut self) -> (Tok, usize) {
        let out = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        out
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<usize, ParseError> {
        let (tok, pos) = self.bump();
        if tok == want {
            Ok(pos)
        } else {
            Err(ParseError::Syntax {
                pos,
                msg: format!("expected {what}, found `{}`", describe(&tok)),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.peek().0 {
                Tok::Plus => {
                    self.bump();
                    terms.push(self.term()?);
                }
                Tok::Minus => {
                    self.bump();
                    let t = self.term()?;
                    terms.push(Node::Product(vec![Node::Const(-1.0), t]));
                }
                _ => break,
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Node::Sum(terms)
        })
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut node = self.factor()?;
        loop {
            match self.peek().0 {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    node = match node {
                        Node::Product(mut fs) => {
                            fs.push(rhs);
                            Node::Product(fs)
                        }
                        other => Node::Product(vec![other, rhs]),
                    };
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    node = Node::Div(Box::new(node), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let mut negate = false;
        loop {
            match self.peek().0 {
                Tok::Minus => {
                    self.bump();
                    negate = !negate;
                }
                Tok::Plus => {
                    self.bump();
                }
                _ => break,
            }
        }
        let node = self.power()?;
        Ok(if negate {
            Node::Product(vec![Node::Const(-1.0), node])
        } else {
            node
        })
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek().0 == &Tok::Caret {
            self.bump();
            let exp = self.integer_exponent()?;
            return Ok(Node::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    fn integer_exponent(&mut self) -> Result<i32, ParseError> {
        let mut sign = 1i32;
        if self.peek().0 == &Tok::Minus {
            self.bump();
            sign = -1;
        }
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                Ok(sign * v as i32)
            }
            other => Err(ParseError::Syntax {
                pos,
                msg: format!("exponent must be an integer literal, found `{}`", describe(&other)),
            }),
        }
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => self.ident(name, pos),
            other => Err(ParseError::Syntax {
                pos,
                msg: format!("expected a value, found `{}`", describe(&other)),
            }),
        }
    }

    fn ident(&mut self, name: String, pos: usize) -> Result<Node, ParseError> {
        // Function application: identifier immediately followed by `(`.
        if self.peek().0 == &Tok::LParen {
            let func = match name.as_str() {
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                "exp" => Func::Exp,
                _ => return Err(ParseError::UnknownFunction { pos, name }),
            };
            self.bump();
            let arg = self.expr()?;
            self.expect(Tok::RParen, "closing `)`")?;
            return Ok(Node::Func(func, Box::new(arg)));
        }
        if let Some(var) = parse_var(&name) {
            if var.index() == 0 || var.index() > self.dim {
                return Err(ParseError::VariableOutOfRange { pos, name, dim: self.dim });
            }
            return Ok(Node::Var(var));
        }
        if matches!(name.as_str(), "sin" | "cos" | "exp") {
            return Err(ParseError::Syntax {
                pos,
                msg: format!("function `{name}` must be followed by `(`"),
            });
        }
        Ok(Node::Param(name))
    }
}

/// `q<k>` / `p<k>` with a purely numeric suffix.
fn parse_var(name: &str) -> Option<Var> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    match head {
        "q" => Some(Var::Q(k)),
        "p" => Some(Var::P(k)),
        _ => None,
    }
}
