//! Affine parameter expressions `c0 + Σ c_k θ_k`.
//!
//! Text form: `expr := term (('+'|'-') term)*`, `term := NUMBER | NUMBER '*'
//! NAME | NAME`; the first term may carry a leading sign. Parsing merges
//! repeated parameters and drops zero coefficients, so every parsed
//! expression is in canonical form and [`ParamExpr::format`] round-trips it.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamExpr {
    pub constant: f64,
    /// `(coefficient, parameter index)`, sorted by index, coefficients non-zero.
    pub terms: Vec<(f64, usize)>,
}

impl ParamExpr {
    pub fn constant(c: f64) -> Self {
        ParamExpr { constant: c, terms: Vec::new() }
    }

    /// `θ_k`.
    pub fn param(k: usize) -> Self {
        ParamExpr { constant: 0.0, terms: vec![(1.0, k)] }
    }

    /// `1 - θ_k`.
    pub fn complement(k: usize) -> Self {
        ParamExpr { constant: 1.0, terms: vec![(-1.0, k)] }
    }

    pub fn new(constant: f64, terms: Vec<(f64, usize)>) -> Self {
        ParamExpr { constant, terms }.canonical()
    }

    fn canonical(mut self) -> Self {
        self.terms.sort_by_key(|&(_, k)| k);
        let mut merged: Vec<(f64, usize)> = Vec::with_capacity(self.terms.len());
        for (c, k) in self.terms {
            match merged.last_mut() {
                Some((acc, last)) if *last == k => *acc += c,
                _ => merged.push((c, k)),
            }
        }
        merged.retain(|(c, _)| *c != 0.0);
        self.terms = merged;
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.terms.iter().find(|(_, j)| *j == k).map_or(0.0, |(c, _)| *c)
    }

    pub fn mentions(&self, k: usize) -> bool {
        self.terms.iter().any(|(_, j)| *j == k)
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(c, k)| acc + c * theta[k])
    }

    /// Bounds of the expression when each `θ_k` ranges over `bounds[k]`.
    pub fn range(&self, bounds: &[(f64, f64)]) -> (f64, f64) {
        self.terms.iter().fold((self.constant, self.constant), |(lo, hi), &(c, k)| {
            let (a, b) = (c * bounds[k].0, c * bounds[k].1);
            (lo + a.min(b), hi + a.max(b))
        })
    }

    pub fn parse(text: &str, names: &[String]) -> Result<Self> {
        Parser { src: text.as_bytes(), pos: 0, names }.expr()
    }

    pub fn format(&self, names: &[String]) -> String {
        let mut out = String::new();
        if self.constant != 0.0 || self.terms.is_empty() {
            write!(out, "{}", self.constant).unwrap();
        }
        for &(c, k) in &self.terms {
            let name = &names[k];
            let magnitude = c.abs();
            if out.is_empty() {
                if c < 0.0 {
                    out.push('-');
                }
            } else {
                out.push_str(if c < 0.0 { " - " } else { " + " });
            }
            if magnitude == 1.0 {
                out.push_str(name);
            } else {
                write!(out, "{magnitude}*{name}").unwrap();
            }
        }
        out
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: 0,
            message: format!(
                "expression `{}` at column {}: {}",
                String::from_utf8_lossy(self.src),
                self.pos + 1,
                msg.into()
            ),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(mut self) -> Result<ParamExpr> {
        let mut constant = 0.0;
        let mut terms = Vec::new();
        let mut sign = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                -1.0
            }
            Some(b'+') => {
                self.pos += 1;
                1.0
            }
            _ => 1.0,
        };
        loop {
            match self.term()? {
                (c, None) => constant += sign * c,
                (c, Some(k)) => terms.push((sign * c, k)),
            }
            sign = match self.peek() {
                None => break,
                Some(b'+') => 1.0,
                Some(b'-') => -1.0,
                Some(_) => return Err(self.err("expected '+' or '-'")),
            };
            self.pos += 1;
        }
        Ok(ParamExpr { constant, terms }.canonical())
    }

    fn term(&mut self) -> Result<(f64, Option<usize>)> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let value = self.number()?;
                if self.peek() == Some(b'*') {
                    self.pos += 1;
                    self.skip_ws();
                    let k = self.name()?;
                    Ok((value, Some(k)))
                } else {
                    Ok((value, None))
                }
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => Ok((1.0, Some(self.name()?))),
            _ => Err(self.err("expected a number or parameter name")),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.src;
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < bytes.len() && matches!(bytes[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < bytes.len() && matches!(bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&bytes[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| self.err(format!("bad number `{text}`")))
    }

    fn name(&mut self) -> Result<usize> {
        let start = self.pos;
        let bytes = self.src;
        while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a parameter name"));
        }
        let name = std::str::from_utf8(&bytes[start..self.pos]).expect("ascii");
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| self.err(format!("unknown parameter `{name}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names() -> Vec<String> {
        ["p_i", "p_l", "p_r", "r_t"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_grammar_forms() {
        let n = names();
        assert_eq!(ParamExpr::parse("p_l", &n).unwrap(), ParamExpr::param(1));
        assert_eq!(ParamExpr::parse("1 - p_l", &n).unwrap(), ParamExpr::complement(1));
        assert_eq!(ParamExpr::parse("-100", &n).unwrap(), ParamExpr::constant(-100.0));
        assert_eq!(
            ParamExpr::parse("0.5 + 0.25*p_i - 2*r_t", &n).unwrap(),
            ParamExpr::new(0.5, vec![(0.25, 0), (-2.0, 3)])
        );
        assert_eq!(ParamExpr::parse("p_l - p_l", &n).unwrap(), ParamExpr::constant(0.0));
        assert_eq!(ParamExpr::parse("1e-3*p_r", &n).unwrap(), ParamExpr::new(0.0, vec![(1e-3, 2)]));
    }

    #[test]
    fn rejects_malformed() {
        let n = names();
        for bad in ["", "p_x", "1 +", "2 * ", "p_l p_r", "1..2", "*p_l"] {
            assert!(ParamExpr::parse(bad, &n).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn formats_canonically() {
        let n = names();
        assert_eq!(ParamExpr::complement(1).format(&n), "1 - p_l");
        assert_eq!(ParamExpr::param(2).format(&n), "p_r");
        assert_eq!(ParamExpr::constant(0.0).format(&n), "0");
        assert_eq!(ParamExpr::new(0.0, vec![(-1.0, 3)]).format(&n), "-r_t");
        assert_eq!(ParamExpr::new(-2.5, vec![(3.0, 0)]).format(&n), "-2.5 + 3*p_i");
    }

    #[test]
    fn range_bounds() {
        let e = ParamExpr::new(0.0, vec![(2.0, 1)]);
        assert_eq!(e.range(&[(0.0, 1.0); 4]), (0.0, 2.0));
        assert_eq!(ParamExpr::complement(0).range(&[(0.0, 1.0); 4]), (0.0, 1.0));
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(
            constant in -1e3f64..1e3,
            raw in proptest::collection::vec((-50f64..50.0, 0usize..4), 0..5),
        ) {
            let n = names();
            let e = ParamExpr::new(constant, raw);
            let back = ParamExpr::parse(&e.format(&n), &n).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
