//! Recursive-descent parser for the field grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' ['-'] integer)?
//! atom    := number | number 'i' | 'i' | 'pi' | 'z'k | func '(' args ')' | '(' expr ')'
//! func    := re | im | abs | abs2 | conj | log | exp | min | max
//!          | indicator '(' region ')' | cindicator '(' region ')'
//! region  := ball '(' c1, ..., cN ';' r ')'
//!          | disc '(' k ',' c ';' r ')'
//!          | box '(' lo1 ',' hi1 ',' ... ',' loN ',' hiN ')'
//! ```
//!
//! Region arguments are constant expressions. Constant subexpressions are
//! folded at parse time.

use num_complex::Complex64;
use thiserror::Error;

use super::{Expr, Region, Val};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut lx = Lexer { src: src.as_bytes(), pos: 0 };
        let mut out = Vec::new();
        loop {
            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_whitespace() {
                lx.pos += 1;
            }
            let start = lx.pos;
            if lx.pos >= lx.src.len() {
                out.push((start, Tok::End));
                return Ok(out);
            }
            let ch = lx.src[lx.pos] as char;
            if ch.is_ascii_digit() || ch == '.' {
                let x = lx.number()?;
                if lx.pos < lx.src.len()
                    && lx.src[lx.pos] == b'i'
                    && !lx.src.get(lx.pos + 1).is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    lx.pos += 1;
                    out.push((start, Tok::Imag(x)));
                } else {
                    out.push((start, Tok::Num(x)));
                }
            } else if ch.is_ascii_alphabetic() || ch == '_' {
                while lx.pos < lx.src.len() && (lx.src[lx.pos].is_ascii_alphanumeric() || lx.src[lx.pos] == b'_') {
                    lx.pos += 1;
                }
                let id = std::str::from_utf8(&lx.src[start..lx.pos]).unwrap().to_string();
                out.push((start, Tok::Ident(id)));
            } else if "+-*/^(),;".contains(ch) {
                lx.pos += 1;
                out.push((start, Tok::Sym(ch)));
            } else {
                return Err(ParseError { pos: start, msg: format!("unexpected character {ch:?}") });
            }
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut p = self.pos + 1;
            if p < s.len() && (s[p] == b'+' || s[p] == b'-') {
                p += 1;
            }
            if p < s.len() && s[p].is_ascii_digit() {
                while p < s.len() && s[p].is_ascii_digit() {
                    p += 1;
                }
                self.pos = p;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map_err(|_| ParseError { pos: start, msg: format!("bad number {text:?}") })
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    dim: usize,
}

pub(super) fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { toks: Lexer::tokens(src)?, at: 0, dim };
    let e = p.expr()?;
    if p.peek() != &Tok::End {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

fn is_const(e: &Expr) -> bool {
    use Expr::*;
    match e {
        Real(_) | Complex(_) => true,
        Coord(_) | Indicator { .. } => false,
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => is_const(a) && is_const(b),
        Neg(a) | Pow(a, _) | Conj(a) | Re(a) | Im(a) | Abs(a) | Abs2(a) | Log(a) | Exp(a) => is_const(a),
        Min(v) | Max(v) => v.iter().all(is_const),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { pos: self.pos(), msg: msg.into() }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == &Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected {c:?}")))
        }
    }

    fn fold(&self, e: Expr, pos: usize) -> Result<Expr, ParseError> {
        if matches!(e, Expr::Real(_) | Expr::Complex(_)) || !is_const(&e) {
            return Ok(e);
        }
        match e.eval(&[]) {
            Ok(Val::R(x)) => Ok(Expr::Real(x)),
            Ok(Val::C(z)) => Ok(Expr::Complex(z)),
            Err(err) => Err(ParseError { pos, msg: format!("constant expression: {err}") }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return self.fold(lhs, pos);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return self.fold(lhs, pos);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        if self.eat('-') {
            let inner = self.unary()?;
            return self.fold(Expr::Neg(Box::new(inner)), pos);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let base = self.atom()?;
        if self.eat('^') {
            let neg = self.eat('-');
            let k = match self.bump() {
                Tok::Num(x) if x.fract() == 0.0 && x.abs() <= 64.0 => x as i32,
                _ => return Err(self.err("exponent must be an integer in [-64, 64]")),
            };
            return self.fold(Expr::Pow(Box::new(base), if neg { -k } else { k }), pos);
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect('(')?;
        let mut v = vec![self.expr()?];
        while self.eat(',') {
            v.push(self.expr()?);
        }
        self.expect(')')?;
        Ok(v)
    }

    fn one_arg(&mut self, name: &str) -> Result<Expr, ParseError> {
        let mut v = self.args()?;
        if v.len() != 1 {
            return Err(self.err(format!("{name} takes one argument")));
        }
        Ok(v.pop().unwrap())
    }

    fn constant(&self, e: &Expr, pos: usize) -> Result<Complex64, ParseError> {
        match self.fold(e.clone(), pos)? {
            Expr::Real(x) if x.is_finite() => Ok(Complex64::new(x, 0.0)),
            Expr::Complex(z) => Ok(z),
            _ => Err(ParseError { pos, msg: "region arguments must be finite constants".into() }),
        }
    }

    fn real_constant(&self, e: &Expr, pos: usize) -> Result<f64, ParseError> {
        let z = self.constant(e, pos)?;
        if z.im != 0.0 {
            return Err(ParseError { pos, msg: "expected a real constant".into() });
        }
        Ok(z.re)
    }

    fn region(&mut self) -> Result<Region, ParseError> {
        let pos = self.pos();
        let name = match self.bump() {
            Tok::Ident(s) => s,
            _ => return Err(ParseError { pos, msg: "expected a region".into() }),
        };
        self.expect('(')?;
        let mut head = vec![(self.pos(), self.expr()?)];
        while self.eat(',') {
            head.push((self.pos(), self.expr()?));
        }
        let radius = if self.eat(';') {
            let p = self.pos();
            let r = self.expr()?;
            Some(self.real_constant(&r, p)?)
        } else {
            None
        };
        self.expect(')')?;
        if let Some(r) = radius {
            if !(r >= 0.0) {
                return Err(ParseError { pos, msg: "radius must be nonnegative".into() });
            }
        }
        match (name.as_str(), radius) {
            ("ball", Some(radius)) => {
                if head.len() != self.dim {
                    return Err(ParseError { pos, msg: format!("ball needs {} center coordinates", self.dim) });
                }
                let center = head
                    .iter()
                    .map(|(p, e)| self.constant(e, *p))
                    .collect::<Result<_, _>>()?;
                Ok(Region::Ball { center, radius })
            }
            ("disc", Some(radius)) => {
                if head.len() != 2 {
                    return Err(ParseError { pos, msg: "disc takes (k, center; radius)".into() });
                }
                let k = self.real_constant(&head[0].1, head[0].0)?;
                if k.fract() != 0.0 || k < 1.0 || k as usize > self.dim {
                    return Err(ParseError { pos, msg: "disc coordinate index out of range".into() });
                }
                let center = self.constant(&head[1].1, head[1].0)?;
                Ok(Region::Disc { coord: k as usize - 1, center, radius })
            }
            ("box", None) => {
                if head.len() != 2 * self.dim {
                    return Err(ParseError { pos, msg: format!("box needs {} corner values", 2 * self.dim) });
                }
                let vals: Vec<Complex64> = head
                    .iter()
                    .map(|(p, e)| self.constant(e, *p))
                    .collect::<Result<_, _>>()?;
                let lo = vals.iter().step_by(2).copied().collect();
                let hi = vals.iter().skip(1).step_by(2).copied().collect();
                Ok(Region::Box { lo, hi })
            }
            _ => Err(ParseError { pos, msg: format!("unknown region form {name:?}") }),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(x) => Ok(Expr::Real(x)),
            Tok::Imag(x) => Ok(Expr::Complex(Complex64::new(0.0, x))),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(id) => match id.as_str() {
                "i" => Ok(Expr::Complex(Complex64::new(0.0, 1.0))),
                "pi" => Ok(Expr::Real(std::f64::consts::PI)),
                "re" => Ok(Expr::Re(Box::new(self.one_arg("re")?))),
                "im" => Ok(Expr::Im(Box::new(self.one_arg("im")?))),
                "abs" => Ok(Expr::Abs(Box::new(self.one_arg("abs")?))),
                "abs2" => Ok(Expr::Abs2(Box::new(self.one_arg("abs2")?))),
                "conj" => Ok(Expr::Conj(Box::new(self.one_arg("conj")?))),
                "log" => Ok(Expr::Log(Box::new(self.one_arg("log")?))),
                "exp" => Ok(Expr::Exp(Box::new(self.one_arg("exp")?))),
                "min" => Ok(Expr::Min(self.args()?)),
                "max" => Ok(Expr::Max(self.args()?)),
                "indicator" | "cindicator" => {
                    self.expect('(')?;
                    let region = self.region()?;
                    self.expect(')')?;
                    Ok(Expr::Indicator { region, closed: id == "cindicator", ramp: 0.0 })
                }
                _ => {
                    if let Some(k) = id.strip_prefix('z').and_then(|s| s.parse::<usize>().ok()) {
                        if k >= 1 && k <= self.dim {
                            return Ok(Expr::Coord(k - 1));
                        }
                        return Err(ParseError { pos, msg: format!("coordinate {id} out of range 1..={}", self.dim) });
                    }
                    Err(ParseError { pos, msg: format!("unknown identifier {id:?}") })
                }
            },
            t => Err(ParseError { pos, msg: format!("unexpected token {t:?}") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let e = parse("1 + 2 * 3 ^ 2", 1).unwrap();
        assert_eq!(e, Expr::Real(19.0));
        let e = parse("-2^2", 1).unwrap();
        assert_eq!(e, Expr::Real(-4.0));
    }

    #[test]
    fn complex_literals_fold() {
        assert_eq!(parse("1-2i", 1).unwrap(), Expr::Complex(Complex64::new(1.0, -2.0)));
        assert_eq!(parse("(1.0-2.0i)", 1).unwrap(), Expr::Complex(Complex64::new(1.0, -2.0)));
        assert_eq!(parse("2.5e-1i", 1).unwrap(), Expr::Complex(Complex64::new(0.0, 0.25)));
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("re(z1) + ", 1).unwrap_err();
        assert_eq!(e.pos, 9);
        assert!(parse("foo(z1)", 1).is_err());
        assert!(parse("z2", 1).is_err());
        assert!(parse("1/0", 1).is_err());
        assert!(parse("indicator(ball(0; 1))", 2).is_err());
        assert!(parse("indicator(ball(z1; 1))", 1).is_err());
    }
}
