//! Text form of trace polynomials: `3*v2*v-1 + (0,-1)*v1`.
//!
//! A polynomial is a `+`/`-` separated list of terms; a term is a `*`
//! separated product of factors, each factor a real literal, a complex
//! literal `(re,im)`, or a symbol `v<int>` (the index may be negative).

use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::trace_poly::{Monomial, TracePoly};

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
            i += 1;
        }
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'-' || bytes[j] == b'+') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        match self.src[start..i].parse::<f64>() {
            Ok(x) => {
                self.pos = i;
                Ok(x)
            }
            Err(_) => self.err("expected a number"),
        }
    }

    fn index(&mut self) -> Result<i32> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        if i < bytes.len() && bytes[i] == b'-' {
            i += 1;
        }
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        match self.src[start..i].parse::<i32>() {
            Ok(k) => {
                self.pos = i;
                Ok(k)
            }
            Err(_) => self.err("expected an integer index after 'v'"),
        }
    }

    fn factor(&mut self) -> Result<(Complex64, Monomial)> {
        self.skip_ws();
        match self.peek() {
            Some('v') => {
                self.pos += 1;
                let k = self.index()?;
                Ok((Complex64::new(1.0, 0.0), Monomial::var(k)))
            }
            Some('(') => {
                self.pos += 1;
                let re = self.number()?;
                self.expect(',')?;
                let im = self.number()?;
                self.expect(')')?;
                Ok((Complex64::new(re, im), Monomial::one()))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let x = self.number()?;
                Ok((Complex64::new(x, 0.0), Monomial::one()))
            }
            _ => self.err("expected a coefficient or a symbol v<k>"),
        }
    }

    fn term(&mut self) -> Result<(Complex64, Monomial)> {
        let (mut coeff, mut mono) = self.factor()?;
        while self.eat('*') {
            let (c, m) = self.factor()?;
            coeff *= c;
            mono = mono.mul(&m);
        }
        Ok((coeff, mono))
    }

    fn poly(&mut self) -> Result<TracePoly> {
        let mut out = TracePoly::zero();
        let mut sign = if self.eat('-') {
            -1.0
        } else {
            self.eat('+');
            1.0
        };
        loop {
            let (c, m) = self.term()?;
            out.add_term(m, c * sign);
            if self.eat('+') {
                sign = 1.0;
            } else if self.eat('-') {
                sign = -1.0;
            } else {
                break;
            }
        }
        self.skip_ws();
        if self.pos != self.src.len() {
            return self.err("unexpected trailing input");
        }
        Ok(out)
    }
}

/// Parses the text form of a trace polynomial.
pub fn parse_poly(src: &str) -> Result<TracePoly> {
    if src.trim().is_empty() {
        return Err(Error::Parse {
            offset: 0,
            message: "empty polynomial".into(),
        });
    }
    Cursor::new(src).poly()
}

impl FromStr for TracePoly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_poly(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn parses_documented_example() {
        let p = parse_poly("3*v2*v-1 + (0,-1)*v1").unwrap();
        let expected = TracePoly::from_terms([
            (Monomial::from_pairs([(2, 1), (-1, 1)]), c(3.0, 0.0)),
            (Monomial::var(1), c(0.0, -1.0)),
        ]);
        assert_eq!(p, expected);
    }

    #[test]
    fn bare_symbols_constants_and_subtraction() {
        assert_eq!(parse_poly("v1").unwrap(), TracePoly::var(1));
        assert_eq!(parse_poly("  7 ").unwrap(), TracePoly::constant(c(7.0, 0.0)));
        let p = parse_poly("v2*v2 - 1").unwrap();
        assert_eq!(p.coefficient(&Monomial::one()), c(-1.0, 0.0));
        assert_eq!(p.coefficient(&Monomial::from_pairs([(2, 2)])), c(1.0, 0.0));
        let q = parse_poly("-2.5e-1*v-3").unwrap();
        assert_eq!(q.coefficient(&Monomial::var(-3)), c(-0.25, 0.0));
        assert_eq!(parse_poly("v1 + v1").unwrap().l1_norm(), 2.0);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in ["", "v", "3*", "(1,2", "v1 +", "x1", "v1 v2", "v1.5"] {
            assert!(
                matches!(parse_poly(bad), Err(Error::Parse { .. })),
                "accepted {bad:?}"
            );
        }
    }
}
