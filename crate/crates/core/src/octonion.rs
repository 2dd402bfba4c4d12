//! Octonions with a table-driven product.
//!
//! `e_i e_j = SIGN[i][j] * e_{IDX[i][j]}`. The table has `e_i^2 = -1` and
//! anticommuting imaginary units; the quaternionic triples are
//! (1,2,3), (1,4,5), (1,7,6), (2,4,6), (2,5,7), (3,4,7), (3,6,5).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IDX: [[usize; 8]; 8] = [
    [0, 1, 2, 3, 4, 5, 6, 7],
    [1, 0, 3, 2, 5, 4, 7, 6],
    [2, 3, 0, 1, 6, 7, 4, 5],
    [3, 2, 1, 0, 7, 6, 5, 4],
    [4, 5, 6, 7, 0, 1, 2, 3],
    [5, 4, 7, 6, 1, 0, 3, 2],
    [6, 7, 4, 5, 2, 3, 0, 1],
    [7, 6, 5, 4, 3, 2, 1, 0],
];

pub const SIGN: [[i8; 8]; 8] = [
    [1, 1, 1, 1, 1, 1, 1, 1],
    [1, -1, 1, -1, 1, -1, -1, 1],
    [1, -1, -1, 1, 1, 1, -1, -1],
    [1, 1, -1, -1, 1, -1, 1, -1],
    [1, -1, -1, -1, -1, 1, 1, 1],
    [1, 1, -1, 1, -1, -1, -1, 1],
    [1, 1, 1, -1, -1, 1, -1, -1],
    [1, -1, 1, 1, -1, -1, 1, -1],
];

/// Norms below this are refused by [`Octonion::inverse`].
pub const INVERSE_EPS: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Octonion(pub [f64; 8]);

impl Octonion {
    pub const ZERO: Octonion = Octonion([0.0; 8]);
    pub const ONE: Octonion = Octonion([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    pub fn basis(i: usize) -> Self {
        let mut c = [0.0; 8];
        c[i] = 1.0;
        Octonion(c)
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let c: [f64; 8] = s.try_into().map_err(|_| {
            Error::DimensionMismatch(format!("octonion needs 8 components, got {}", s.len()))
        })?;
        Ok(Octonion(c))
    }

    pub fn re(&self) -> f64 {
        self.0[0]
    }

    pub fn conj(&self) -> Self {
        let mut c = self.0.map(|v| -v);
        c[0] = self.0[0];
        Octonion(c)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, o: &Octonion) -> f64 {
        self.0.iter().zip(o.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Octonion(self.0.map(|v| v * s))
    }

    pub fn inverse(&self) -> Result<Self> {
        self.inverse_eps(INVERSE_EPS)
    }

    /// `g^{-1} = g* / |g|^2`
    pub fn inverse_eps(&self, eps: f64) -> Result<Self> {
        let n = self.norm();
        if n < eps {
            return Err(Error::DivisionByZero { norm: n, eps });
        }
        Ok(self.conj().scale(1.0 / self.norm_sqr()))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn oct_mul(a: &Octonion, b: &Octonion) -> Octonion {
    let mut out = [0.0; 8];
    for i in 0..8 {
        if a.0[i] == 0.0 {
            continue;
        }
        for j in 0..8 {
            out[IDX[i][j]] += SIGN[i][j] as f64 * a.0[i] * b.0[j];
        }
    }
    Octonion(out)
}

pub fn oct_inverse(g: &Octonion) -> Result<Octonion> {
    g.inverse()
}

/// `[a, b, c] = (ab)c - a(bc)`
pub fn oct_associator(a: &Octonion, b: &Octonion, c: &Octonion) -> Octonion {
    (a * b) * *c - *a * (b * c)
}

impl Mul for Octonion {
    type Output = Octonion;
    fn mul(self, rhs: Octonion) -> Octonion {
        oct_mul(&self, &rhs)
    }
}

impl Mul for &Octonion {
    type Output = Octonion;
    fn mul(self, rhs: &Octonion) -> Octonion {
        oct_mul(self, rhs)
    }
}

impl Add for Octonion {
    type Output = Octonion;
    fn add(self, rhs: Octonion) -> Octonion {
        let mut c = self.0;
        c.iter_mut().zip(rhs.0).for_each(|(a, b)| *a += b);
        Octonion(c)
    }
}

impl Sub for Octonion {
    type Output = Octonion;
    fn sub(self, rhs: Octonion) -> Octonion {
        self + (-rhs)
    }
}

impl Neg for Octonion {
    type Output = Octonion;
    fn neg(self) -> Octonion {
        Octonion(self.0.map(|v| -v))
    }
}

impl fmt::Display for Octonion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.0.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, "{}", if c < 0.0 { "-" } else { "+" })?;
            }
            if c.abs() != 1.0 {
                write!(f, "{}", c.abs())?;
            }
            write!(f, "e{i}")?;
            first = false;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Parses basis expressions such as `e1+2e3`, `-0.5e0 + e7` or `3`
/// (a bare number is a multiple of `e0`). Coefficients are plain decimals.
impl FromStr for Octonion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::SchemaError {
            path: "$".into(),
            message: msg,
        };
        let text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if text.is_empty() {
            return Err(bad("empty octonion expression".into()));
        }
        let mut out = [0.0; 8];
        let bytes = text.as_bytes();
        let mut pos = 0;
        while pos < bytes.len() {
            let start = pos;
            let mut sign = 1.0;
            if bytes[pos] == b'+' || bytes[pos] == b'-' {
                if bytes[pos] == b'-' {
                    sign = -1.0;
                }
                pos += 1;
            } else if start != 0 {
                return Err(bad(format!("expected '+' or '-' at offset {pos}")));
            }
            let mut end = pos;
            while end < bytes.len() && bytes[end] != b'+' && bytes[end] != b'-' {
                end += 1;
            }
            let term = &text[pos..end];
            if term.is_empty() {
                return Err(bad(format!("empty term at offset {start}")));
            }
            let (coeff, idx) = parse_term(term).map_err(bad)?;
            out[idx] += sign * coeff;
            pos = end;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite coefficient".into()));
        }
        Ok(Octonion(out))
    }
}

fn parse_term(term: &str) -> std::result::Result<(f64, usize), String> {
    match term.rfind('e') {
        Some(p) if p + 2 == term.len() && term.as_bytes()[p + 1].is_ascii_digit() => {
            let idx = (term.as_bytes()[p + 1] - b'0') as usize;
            if idx > 7 {
                return Err(format!("basis index {idx} out of range in '{term}'"));
            }
            let c = &term[..p];
            let c = c.strip_suffix('*').unwrap_or(c);
            let coeff = if c.is_empty() {
                1.0
            } else {
                c.parse::<f64>()
                    .map_err(|_| format!("bad coefficient '{c}' in '{term}'"))?
            };
            Ok((coeff, idx))
        }
        _ => term
            .parse::<f64>()
            .map(|v| (v, 0))
            .map_err(|_| format!("cannot parse term '{term}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_products() {
        assert_eq!(Octonion::basis(1) * Octonion::basis(2), Octonion::basis(3));
        assert_eq!(Octonion::basis(3) * Octonion::basis(5), -Octonion::basis(6));
        assert_eq!(Octonion::basis(4) * Octonion::basis(4), -Octonion::ONE);
    }

    #[test]
    fn inverses() {
        assert_eq!(Octonion::basis(1).inverse().unwrap(), -Octonion::basis(1));
        assert_eq!(Octonion::ONE.inverse().unwrap(), Octonion::ONE);
        let g: Octonion = "e0+e1".parse().unwrap();
        let want: Octonion = "0.5e0-0.5e1".parse().unwrap();
        assert_eq!(g.inverse().unwrap(), want);
        assert!(matches!(
            Octonion::ZERO.inverse(),
            Err(Error::DivisionByZero { .. })
        ));
    }

    #[test]
    fn associator_examples() {
        let (e1, e2, e4) = (Octonion::basis(1), Octonion::basis(2), Octonion::basis(4));
        assert_eq!(oct_associator(&e1, &e2, &e1), Octonion::ZERO);
        assert_eq!(oct_associator(&e1, &e2, &e4), Octonion::basis(7).scale(2.0));
    }

    #[test]
    fn parses_expressions() {
        let g: Octonion = "e1+2e3".parse().unwrap();
        assert_eq!(g.0, [0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let h: Octonion = " -1.5e0 + e7 - 2*e2".parse().unwrap();
        assert_eq!(h.0, [-1.5, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let k: Octonion = "3".parse().unwrap();
        assert_eq!(k, Octonion::ONE.scale(3.0));
        assert!("e8".parse::<Octonion>().is_err());
        assert!("e1++e2".parse::<Octonion>().is_err());
        assert!("".parse::<Octonion>().is_err());
    }

    #[test]
    fn display_round_trips() {
        let g: Octonion = "2e0-e3+0.25e6".parse().unwrap();
        assert_eq!(g.to_string().parse::<Octonion>().unwrap(), g);
    }
}
