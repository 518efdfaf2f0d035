//! Complex arithmetic expressions for custom incoming waves.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number ['i'] | 'i' | 'nu' | 'xi' | func '(' expr ')' | '(' expr ')'
//! func  := conj | sqrt | abs
//! ```
//!
//! `sqrt` is the principal root and `abs` returns a real value.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Nu,
    Xi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Conj,
    Sqrt,
    Abs,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(Complex64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression together with its source text.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Arc<Node>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Parses `source`, allowing only the variables in `allowed`.
    pub fn parse(source: &str, allowed: &[Var]) -> Result<Self, ExprError> {
        let mut p = Parser { chars: source.chars().collect(), pos: 0, allowed };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error(format!("unexpected '{}'", p.chars[p.pos])));
        }
        Ok(Self { source: source.trim().to_string(), root: Arc::new(root) })
    }

    pub fn eval(&self, nu: Complex64, xi: Complex64) -> Complex64 {
        eval(&self.root, nu, xi)
    }

    /// Value of an expression without variables.
    pub fn constant(source: &str) -> Result<Complex64, ExprError> {
        Ok(Self::parse(source, &[])?.eval(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)))
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

fn eval(n: &Node, nu: Complex64, xi: Complex64) -> Complex64 {
    match n {
        Node::Const(c) => *c,
        Node::Var(Var::Nu) => nu,
        Node::Var(Var::Xi) => xi,
        Node::Neg(a) => -eval(a, nu, xi),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, nu, xi), eval(b, nu, xi));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => power(a, b),
            }
        }
        Node::Call(f, a) => {
            let a = eval(a, nu, xi);
            match f {
                Func::Conj => a.conj(),
                Func::Sqrt => a.sqrt(),
                Func::Abs => Complex64::new(a.norm(), 0.0),
            }
        }
    }
}

/// Small integer powers by repeated multiplication so `xi^2` is exact.
fn power(a: Complex64, b: Complex64) -> Complex64 {
    if b.im == 0.0 && b.re.fract() == 0.0 && b.re.abs() <= 16.0 {
        let k = b.re as i32;
        return a.powi(k);
    }
    a.powc(b)
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    allowed: &'a [Var],
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError { column: self.pos + 1, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(ch) if ch.is_ascii_digit() || ch == '.' => self.number(),
            Some(ch) if ch.is_ascii_alphabetic() => self.word(),
            Some(ch) => Err(self.error(format!("unexpected '{ch}'"))),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let at = |p: &Self, k: usize| p.chars.get(k).copied();
        while at(self, self.pos).is_some_and(|c| c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        if matches!(at(self, self.pos), Some('e' | 'E')) {
            let mut k = self.pos + 1;
            if matches!(at(self, k), Some('+' | '-')) {
                k += 1;
            }
            if at(self, k).is_some_and(|c| c.is_ascii_digit()) {
                self.pos = k;
                while at(self, self.pos).is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        let value: f64 = text.parse().map_err(|_| ExprError { column: start + 1, message: format!("bad number '{text}'") })?;
        // `2i` is an imaginary literal.
        if at(self, self.pos) == Some('i') && !at(self, self.pos + 1).is_some_and(|c| c.is_ascii_alphanumeric()) {
            self.pos += 1;
            return Ok(Node::Const(Complex64::new(0.0, value)));
        }
        Ok(Node::Const(Complex64::new(value, 0.0)))
    }

    fn word(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_') {
            self.pos += 1;
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        let var = |v: Var, p: &Self| {
            if p.allowed.contains(&v) {
                Ok(Node::Var(v))
            } else {
                Err(ExprError { column: start + 1, message: format!("'{word}' is not available here") })
            }
        };
        match word.as_str() {
            "i" => Ok(Node::Const(Complex64::new(0.0, 1.0))),
            "nu" => var(Var::Nu, self),
            "xi" => var(Var::Xi, self),
            "conj" | "sqrt" | "abs" => {
                let f = match word.as_str() {
                    "conj" => Func::Conj,
                    "sqrt" => Func::Sqrt,
                    _ => Func::Abs,
                };
                if self.peek() != Some('(') {
                    return Err(self.error(format!("expected '(' after {word}")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(Node::Call(f, Box::new(arg)))
            }
            _ => Err(ExprError { column: start + 1, message: format!("unknown name '{word}'") }),
        }
    }
}
