//! Arithmetic expressions over parameter names: `+ - * / ^`, parentheses and
//! unary sign. Expressions are compiled once into a small AST and evaluated
//! per parameter draw without further parsing.

use std::fmt;

/// Compiled expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, params: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Param(i) => params[*i],
            Expr::Neg(e) => -e.eval(params),
            Expr::Add(a, b) => a.eval(params) + b.eval(params),
            Expr::Sub(a, b) => a.eval(params) - b.eval(params),
            Expr::Mul(a, b) => a.eval(params) * b.eval(params),
            Expr::Div(a, b) => a.eval(params) / b.eval(params),
            Expr::Pow(a, b) => a.eval(params).powf(b.eval(params)),
        }
    }
}

/// Parse failure at a byte offset within the expression source.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.offset + 1, self.message)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    params: &'a [String],
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn fail<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { offset, message: message.into() })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // Right-associative; the exponent may carry its own sign.
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(ch) = self.peek() else {
            return self.fail(self.pos, "unexpected end of expression");
        };
        let start = self.pos;
        if ch == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            if self.peek() != Some(b')') {
                return self.fail(self.pos, "expected ')'");
            }
            self.pos += 1;
            return Ok(inner);
        }
        if ch.is_ascii_digit() || ch == b'.' {
            let mut end = self.pos;
            let mut seen_exp = false;
            while end < self.src.len() {
                let c = self.src[end];
                if c.is_ascii_digit() || c == b'.' {
                    end += 1;
                } else if (c == b'e' || c == b'E') && !seen_exp {
                    seen_exp = true;
                    end += 1;
                    if end < self.src.len() && (self.src[end] == b'+' || self.src[end] == b'-') {
                        end += 1;
                    }
                } else {
                    break;
                }
            }
            let text = std::str::from_utf8(&self.src[start..end]).unwrap();
            let value: f64 = text
                .parse()
                .map_err(|_| ExprError { offset: start, message: format!("bad number '{text}'") })?;
            self.pos = end;
            return Ok(Expr::Const(value));
        }
        if ch.is_ascii_alphabetic() || ch == b'_' {
            let mut end = self.pos;
            while end < self.src.len()
                && ((self.src[end] as char).is_ascii_alphanumeric() || self.src[end] == b'_')
            {
                end += 1;
            }
            let name = std::str::from_utf8(&self.src[start..end]).unwrap();
            self.pos = end;
            return match self.params.iter().position(|p| p == name) {
                Some(idx) => Ok(Expr::Param(idx)),
                None => self.fail(start, format!("unknown parameter name '{name}'")),
            };
        }
        self.fail(self.pos, format!("unexpected character '{}'", ch as char))
    }
}

/// Parses an expression against a parameter name table.
pub fn parse_expr(src: &str, params: &[String]) -> Result<Expr, ExprError> {
    let mut parser = Parser { src: src.as_bytes(), pos: 0, params };
    let expr = parser.expr()?;
    parser.skip_ws();
    if parser.pos != src.len() {
        return Err(ExprError {
            offset: parser.pos,
            message: format!("trailing input '{}'", &src[parser.pos..]),
        });
    }
    Ok(expr)
}
