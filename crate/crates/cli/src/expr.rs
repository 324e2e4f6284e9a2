//! Expressions over numbers, `t`, `pi`, `sin`, `cos`, `+`, `-`, `*` and
//! parentheses, compiled to [`TimeFn`] trees.

use std::fmt;

use spinboson::trajectories::TimeFunction;
use spinboson::TimeFn;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    /// 1-based character column.
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.message)
    }
}

impl std::error::Error for ExprError {}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Open,
    Close,
}

fn lex(src: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' | '\t' => i += 1,
            '+' | '-' | '*' | '(' | ')' => {
                out.push((
                    match c {
                        '+' => Token::Plus,
                        '-' => Token::Minus,
                        '*' => Token::Star,
                        '(' => Token::Open,
                        _ => Token::Close,
                    },
                    col,
                ));
                i += 1;
            }
            // the minus sign U+2212 reads naturally in configs
            '\u{2212}' => {
                out.push((Token::Minus, col));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
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
                let text: String = chars[start..i].iter().collect();
                let v = text.parse::<f64>().map_err(|_| ExprError { column: col, message: format!("bad number `{text}`") })?;
                out.push((Token::Num(v), col));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((Token::Ident(chars[start..i].iter().collect()), col));
            }
            other => return Err(ExprError { column: col, message: format!("unexpected character `{other}`") }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    T,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>, usize),
    Cos(Box<Expr>, usize),
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn column(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, c)| *c)
    }

    fn fail<X>(&self, message: impl Into<String>) -> Result<X, ExprError> {
        Err(ExprError { column: self.column(), message: message.into() })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::Star) {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let col = self.column();
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_close()?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "t" => Ok(Expr::T),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "sin" | "cos" => {
                        if self.peek() != Some(&Token::Open) {
                            return self.fail(format!("expected `(` after `{name}`"));
                        }
                        self.pos += 1;
                        let arg = Box::new(self.expr()?);
                        self.expect_close()?;
                        Ok(if name == "sin" { Expr::Sin(arg, col) } else { Expr::Cos(arg, col) })
                    }
                    _ => Err(ExprError { column: col, message: format!("unknown name `{name}` (allowed: t, pi, sin, cos)") }),
                }
            }
            Some(tok) => self.fail(format!("unexpected {}", describe(&tok))),
            None => self.fail("unexpected end of expression"),
        }
    }

    fn expect_close(&mut self) -> Result<(), ExprError> {
        if self.peek() == Some(&Token::Close) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail("expected `)`")
        }
    }
}

fn describe(tok: &Token) -> String {
    match tok {
        Token::Num(v) => format!("number {v}"),
        Token::Ident(s) => format!("`{s}`"),
        Token::Plus => "`+`".into(),
        Token::Minus => "`-`".into(),
        Token::Star => "`*`".into(),
        Token::Open => "`(`".into(),
        Token::Close => "`)`".into(),
    }
}

impl Expr {
    fn constant(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::T => None,
            Expr::Add(a, b) => Some(a.constant()? + b.constant()?),
            Expr::Sub(a, b) => Some(a.constant()? - b.constant()?),
            Expr::Mul(a, b) => Some(a.constant()? * b.constant()?),
            Expr::Neg(a) => Some(-a.constant()?),
            Expr::Sin(a, _) => Some(a.constant()?.sin()),
            Expr::Cos(a, _) => Some(a.constant()?.cos()),
        }
    }

    /// `(c0, c1)` with the expression equal to `c0 + c1·t`.
    fn affine(&self) -> Option<(f64, f64)> {
        if let Some(c) = self.constant() {
            return Some((c, 0.0));
        }
        match self {
            Expr::T => Some((0.0, 1.0)),
            Expr::Add(a, b) => {
                let ((a0, a1), (b0, b1)) = (a.affine()?, b.affine()?);
                Some((a0 + b0, a1 + b1))
            }
            Expr::Sub(a, b) => {
                let ((a0, a1), (b0, b1)) = (a.affine()?, b.affine()?);
                Some((a0 - b0, a1 - b1))
            }
            Expr::Neg(a) => a.affine().map(|(c0, c1)| (-c0, -c1)),
            Expr::Mul(a, b) => match (a.constant(), b.constant()) {
                (Some(c), _) => b.affine().map(|(c0, c1)| (c * c0, c * c1)),
                (_, Some(c)) => a.affine().map(|(c0, c1)| (c * c0, c * c1)),
                _ => None,
            },
            _ => None,
        }
    }

    fn compile(&self) -> Result<TimeFn, ExprError> {
        if let Some(c) = self.constant() {
            return Ok(TimeFunction::real_constant(c));
        }
        let minus_one = spinboson::scalar::cr(-1.0);
        Ok(match self {
            Expr::Num(_) => unreachable!("constants are folded above"),
            Expr::T => TimeFunction::t(),
            Expr::Add(a, b) => a.compile()?.plus(b.compile()?),
            Expr::Sub(a, b) => a.compile()?.plus(b.compile()?.scaled(minus_one)),
            Expr::Neg(a) => a.compile()?.scaled(minus_one),
            Expr::Mul(a, b) => match (a.constant(), b.constant()) {
                (Some(c), _) => b.compile()?.scaled(spinboson::scalar::cr(c)),
                (_, Some(c)) => a.compile()?.scaled(spinboson::scalar::cr(c)),
                _ => a.compile()?.times(b.compile()?),
            },
            Expr::Sin(arg, col) | Expr::Cos(arg, col) => {
                let Some((shift, freq)) = arg.affine() else {
                    return Err(ExprError { column: *col, message: "the argument of sin/cos must be of the form a*t + b".into() });
                };
                let amp = spinboson::scalar::cr(1.0);
                if matches!(self, Expr::Sin(..)) {
                    TimeFunction::Sin { amp, freq, shift }
                } else {
                    TimeFunction::Cos { amp, freq, shift }
                }
            }
        })
    }
}

fn parse_tree(src: &str) -> Result<Expr, ExprError> {
    let tokens = lex(src)?;
    let end = src.chars().count() + 1;
    if tokens.is_empty() {
        return Err(ExprError { column: 1, message: "empty expression".into() });
    }
    let mut p = Parser { tokens, pos: 0, end };
    let e = p.expr()?;
    if p.pos < p.tokens.len() {
        return p.fail(format!("unexpected {} after the expression", describe(&p.tokens[p.pos].0)));
    }
    Ok(e)
}

/// Parse a time-dependent expression.
pub fn parse_function(src: &str) -> Result<TimeFn, ExprError> {
    parse_tree(src)?.compile()
}

/// Parse an expression that must not depend on `t`.
pub fn parse_constant(src: &str) -> Result<f64, ExprError> {
    parse_tree(src)?.constant().ok_or_else(|| ExprError { column: 1, message: "expected a constant, found a function of t".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, t: f64) -> f64 {
        parse_function(src).unwrap().eval(t).re
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(parse_constant("1 + 2*3").unwrap(), 7.0);
        assert_eq!(parse_constant("-(1 - 4)*2").unwrap(), 6.0);
        assert_eq!(parse_constant("2.5e-1 + .25").unwrap(), 0.5);
        assert_eq!(parse_constant("3 − 1").unwrap(), 2.0);
    }

    #[test]
    fn functions_of_time() {
        let t = 0.83;
        assert!((eval("0.2 + 0.1*cos(4*t)", t) - (0.2 + 0.1 * (4.0 * t).cos())).abs() < 1e-15);
        assert!((eval("sin(2*t + 0.5) * t", t) - (2.0 * t + 0.5).sin() * t).abs() < 1e-15);
        assert!((eval("-(t - 1)*(t + 1)", t) - (1.0 - t * t)).abs() < 1e-15);
        assert!((eval("cos(pi*t)", 1.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivatives_stay_symbolic() {
        let f = parse_function("0.3*sin(0.4*t)").unwrap();
        assert!((f.deriv(1.1).re - 0.12 * (0.44f64).cos()).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_columns() {
        let e = parse_function("1 + * t").unwrap_err();
        assert_eq!(e.column, 5);
        let e = parse_function("sin(t*t)").unwrap_err();
        assert_eq!(e.column, 1);
        assert!(e.message.contains("a*t + b"));
        let e = parse_function("exp(t)").unwrap_err();
        assert!(e.message.contains("unknown name"));
        let e = parse_function("(t + 1").unwrap_err();
        assert!(e.message.contains("expected `)`"));
        assert!(parse_constant("2*t").is_err());
        assert!(parse_function("").is_err());
        assert!(parse_function("1 $ 2").unwrap_err().message.contains("unexpected character"));
    }
}
