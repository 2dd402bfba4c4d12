//! Sparse real polynomials: the portable format for multiplications,
//! Lagrangians, structure functions and anchors read from files.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{gradient, Point, ScalarMap, FD_STEP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    #[serde(rename = "c")]
    pub coeff: f64,
    #[serde(rename = "e")]
    pub exps: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(c: f64, nvars: usize) -> Self {
        Self {
            terms: vec![Monomial {
                coeff: c,
                exps: vec![0; nvars],
            }],
        }
    }

    /// `c * x_i`
    pub fn linear(c: f64, i: usize, nvars: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        Self {
            terms: vec![Monomial { coeff: c, exps }],
        }
    }

    pub fn term(mut self, coeff: f64, exps: &[u32]) -> Self {
        self.terms.push(Monomial {
            coeff,
            exps: exps.to_vec(),
        });
        self
    }

    /// Every monomial must carry exactly `nvars` exponents.
    pub fn check_arity(&self, nvars: usize) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if t.exps.len() != nvars {
                return Err(Error::SchemaError {
                    path: format!("terms[{i}].e"),
                    message: format!("expected {nvars} exponents, got {}", t.exps.len()),
                });
            }
            if !t.coeff.is_finite() {
                return Err(Error::SchemaError {
                    path: format!("terms[{i}].c"),
                    message: "coefficient must be finite".into(),
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.exps
                    .iter()
                    .zip(x)
                    .fold(t.coeff, |acc, (&e, &xi)| acc * xi.powi(e as i32))
            })
            .sum()
    }

    pub fn derivative(&self, var: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exps.get(var).copied().unwrap_or(0) > 0)
            .map(|t| {
                let mut exps = t.exps.clone();
                let e = exps[var];
                exps[var] = e - 1;
                Monomial {
                    coeff: t.coeff * e as f64,
                    exps,
                }
            })
            .collect();
        Polynomial { terms }
    }

    pub fn gradient(&self, x: &[f64]) -> Point {
        DVector::from_iterator(x.len(), (0..x.len()).map(|i| self.derivative(i).eval(x)))
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exps.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", t.coeff)?;
            for (i, &e) in t.exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{i}")?,
                    _ => write!(f, "*x{i}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

/// A scalar function on a chart: either a polynomial (portable, exact
/// gradient) or an in-process closure (gradient by central differences).
#[derive(Clone)]
pub enum ScalarFn {
    Poly(Polynomial),
    Callable(ScalarMap),
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Poly(p) => write!(f, "Poly({p})"),
            ScalarFn::Callable(_) => write!(f, "Callable"),
        }
    }
}

impl ScalarFn {
    pub fn callable<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        ScalarFn::Callable(Arc::new(f))
    }

    pub fn zero() -> Self {
        ScalarFn::Poly(Polynomial::zero())
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            ScalarFn::Poly(p) => p.eval(x.as_slice()),
            ScalarFn::Callable(f) => f(x),
        }
    }

    pub fn gradient(&self, x: &Point) -> Point {
        match self {
            ScalarFn::Poly(p) => p.gradient(x.as_slice()),
            ScalarFn::Callable(f) => gradient(|y| f(y), x, FD_STEP),
        }
    }

    pub fn scaled(&self, s: f64) -> ScalarFn {
        match self {
            ScalarFn::Poly(p) => ScalarFn::Poly(Polynomial {
                terms: p
                    .terms
                    .iter()
                    .map(|t| Monomial {
                        coeff: t.coeff * s,
                        exps: t.exps.clone(),
                    })
                    .collect(),
            }),
            ScalarFn::Callable(f) => {
                let f = f.clone();
                ScalarFn::callable(move |x| s * f(x))
            }
        }
    }
}

/// One term of a loop multiplication coordinate:
/// `coeff * x^x_exps * y^y_exps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopTerm {
    #[serde(rename = "c")]
    pub coeff: f64,
    pub x: Vec<u32>,
    pub y: Vec<u32>,
}

/// Polynomial map `R^n x R^n -> R^n`, one term list per output coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolyBinaryMap {
    pub coords: Vec<Vec<LoopTerm>>,
}

impl PolyBinaryMap {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.coords.len() != dim {
            return Err(Error::SchemaError {
                path: "terms".into(),
                message: format!("expected {dim} output coordinates, got {}", self.coords.len()),
            });
        }
        for (k, terms) in self.coords.iter().enumerate() {
            for (i, t) in terms.iter().enumerate() {
                if t.x.len() != dim || t.y.len() != dim {
                    return Err(Error::SchemaError {
                        path: format!("terms[{k}][{i}]"),
                        message: format!("exponent vectors must have length {dim}"),
                    });
                }
                if !t.coeff.is_finite() {
                    return Err(Error::SchemaError {
                        path: format!("terms[{k}][{i}].c"),
                        message: "coefficient must be finite".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &Point, y: &Point) -> Point {
        DVector::from_iterator(
            self.coords.len(),
            self.coords.iter().map(|terms| {
                terms
                    .iter()
                    .map(|t| {
                        let mut v = t.coeff;
                        for (i, &e) in t.x.iter().enumerate() {
                            v *= x[i].powi(e as i32);
                        }
                        for (i, &e) in t.y.iter().enumerate() {
                            v *= y[i].powi(e as i32);
                        }
                        v
                    })
                    .sum()
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn evaluates_and_differentiates() {
        // 3 x0^2 x1 - x1
        let p = Polynomial::zero().term(3.0, &[2, 1]).term(-1.0, &[0, 1]);
        assert_eq!(p.eval(&[2.0, 5.0]), 55.0);
        let g = p.gradient(&[2.0, 5.0]);
        assert_eq!(g, dvector![60.0, 11.0]);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn rejects_fractional_exponents() {
        let r: std::result::Result<Polynomial, _> =
            serde_json::from_str(r#"{"terms":[{"c":1.0,"e":[1.5]}]}"#);
        assert!(r.is_err());
    }

    #[test]
    fn binary_map_cotangent_example() {
        // x.y = x + y + x^2 y
        let m = PolyBinaryMap {
            coords: vec![vec![
                LoopTerm { coeff: 1.0, x: vec![1], y: vec![0] },
                LoopTerm { coeff: 1.0, x: vec![0], y: vec![1] },
                LoopTerm { coeff: 1.0, x: vec![2], y: vec![1] },
            ]],
        };
        m.validate(1).unwrap();
        assert_eq!(m.eval(&dvector![2.0], &dvector![1.0])[0], 7.0);
    }
}
