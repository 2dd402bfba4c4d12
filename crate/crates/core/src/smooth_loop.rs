//! Local smooth loops on charts of R^n: evaluation, division and the
//! second-order Taylor coefficients that give the tangent skew algebra.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{jacobian, solve_square, BinMap, Point, VecMap, FD_STEP};
use crate::octonion::Octonion;
use crate::poly::PolyBinaryMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Antisymmetric structure constants `s^k_{ij}`, stored flat as `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewAlgebra {
    pub dim: usize,
    constants: Vec<f64>,
}

impl SkewAlgebra {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            constants: vec![0.0; dim * dim * dim],
        }
    }

    /// Accepts constants that are antisymmetric up to `1e-12` relative and
    /// stores their exact antisymmetrization.
    pub fn new(dim: usize, constants: Vec<f64>) -> Result<Self> {
        if constants.len() != dim * dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} constants for dimension {dim}",
                constants.len()
            )));
        }
        let scale = constants.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let a = constants[(k * dim + i) * dim + j];
                    let b = constants[(k * dim + j) * dim + i];
                    if (a + b).abs() > 1e-12 * scale {
                        return Err(Error::NotAntisymmetric(format!(
                            "s^{k}_{i}{j} = {a} but s^{k}_{j}{i} = {b}"
                        )));
                    }
                }
            }
        }
        Ok(Self::antisymmetrize(dim, &constants, 0.5))
    }

    /// `s^k_{ij} = w (c^k_{ij} - c^k_{ji})`.
    pub fn antisymmetrize(dim: usize, c: &[f64], w: f64) -> Self {
        let mut constants = vec![0.0; dim * dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    constants[(k * dim + i) * dim + j] =
                        w * (c[(k * dim + i) * dim + j] - c[(k * dim + j) * dim + i]);
                }
            }
        }
        Self { dim, constants }
    }

    /// The cross product on R^3.
    pub fn cross3() -> Self {
        let mut s = Self::zero(3);
        for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            s.constants[(k * 3 + i) * 3 + j] = 1.0;
            s.constants[(k * 3 + j) * 3 + i] = -1.0;
        }
        s
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.constants[(k * self.dim + i) * self.dim + j]
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn bracket(&self, x: &Point, y: &Point) -> Point {
        let n = self.dim;
        DVector::from_fn(n, |k, _| {
            let mut v = 0.0;
            for i in 0..n {
                for j in 0..n {
                    v += self.get(k, i, j) * x[i] * y[j];
                }
            }
            v
        })
    }

    pub fn max_abs_diff(&self, other: &SkewAlgebra) -> f64 {
        self.constants
            .iter()
            .zip(&other.constants)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest Jacobiator component over basis triples.
    pub fn jacobi_defect(&self) -> f64 {
        let n = self.dim;
        let e = |i: usize| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (a, b, c) = (e(i), e(j), e(k));
                    let jac = self.bracket(&a, &self.bracket(&b, &c))
                        + self.bracket(&b, &self.bracket(&c, &a))
                        + self.bracket(&c, &self.bracket(&a, &b));
                    worst = worst.max(jac.amax());
                }
            }
        }
        worst
    }

    /// Largest component of `[a,[b,c]] + [b,[a,c]]` over basis triples; zero
    /// exactly when `[x,[x,y]]` vanishes identically.
    pub fn engel_defect(&self) -> f64 {
        let n = self.dim;
        let e = |i: usize| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (a, b, c) = (e(i), e(j), e(k));
                    let d = self.bracket(&a, &self.bracket(&b, &c))
                        + self.bracket(&b, &self.bracket(&a, &c));
                    worst = worst.max(d.amax());
                }
            }
        }
        worst
    }
}

/// A local loop on a chart of R^dim.
#[derive(Clone)]
pub struct SmoothLoopChart {
    pub dim: usize,
    pub unit: Point,
    pub fd_step: f64,
    /// Optional validity radius around the unit; points beyond it are refused.
    pub radius: Option<f64>,
    pub name: String,
    mul: BinMap,
    inverse: Option<VecMap>,
}

impl fmt::Debug for SmoothLoopChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothLoopChart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("unit", &self.unit.as_slice())
            .field("fd_step", &self.fd_step)
            .field("radius", &self.radius)
            .field("has_inverse", &self.inverse.is_some())
            .finish()
    }
}

impl SmoothLoopChart {
    pub fn from_fn<F>(dim: usize, name: &str, mul: F) -> Self
    where
        F: Fn(&Point, &Point) -> Point + Send + Sync + 'static,
    {
        Self {
            dim,
            unit: DVector::zeros(dim),
            fd_step: FD_STEP,
            radius: None,
            name: name.to_string(),
            mul: Arc::new(mul),
            inverse: None,
        }
    }

    pub fn polynomial(dim: usize, map: PolyBinaryMap) -> Result<Self> {
        map.validate(dim)?;
        Ok(Self::from_fn(dim, "polynomial", move |x, y| map.eval(x, y)))
    }

    /// The octonion loop in the chart `x -> e0 + x`, unit at the origin.
    pub fn octonion() -> Self {
        let to = |x: &Point| {
            let mut c = [0.0; 8];
            c.copy_from_slice(x.as_slice());
            c[0] += 1.0;
            Octonion(c)
        };
        let from = |o: Octonion| {
            let mut c = o.0;
            c[0] -= 1.0;
            DVector::from_row_slice(&c)
        };
        let mut l = Self::from_fn(8, "octonion", move |x, y| from(to(x) * to(y)));
        l.inverse = Some(Arc::new(move |x: &Point| match to(x).inverse() {
            Ok(inv) => from(inv),
            Err(_) => DVector::from_element(8, f64::NAN),
        }));
        l
    }

    /// A 1-dimensional loop `x.y = x + y + x^2 y`.
    pub fn cubic_line() -> Self {
        Self::from_fn(1, "x+y+x^2y", |x, y| {
            DVector::from_element(1, x[0] + y[0] + x[0] * x[0] * y[0])
        })
    }

    /// `x.y = (x1 + y1 + x1 y2, x2 + y2 + x2 y1)`.
    pub fn planar_h() -> Self {
        Self::from_fn(2, "H", |x, y| {
            DVector::from_vec(vec![x[0] + y[0] + x[0] * y[1], x[1] + y[1] + x[1] * y[0]])
        })
    }

    pub fn with_inverse<F>(mut self, inv: F) -> Self
    where
        F: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inv));
        self
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = Some(r);
        self
    }

    pub fn mul_map(&self) -> BinMap {
        self.mul.clone()
    }

    pub fn inverse_map(&self) -> Option<VecMap> {
        self.inverse.clone()
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "point of length {} in a {}-dimensional chart",
                x.len(),
                self.dim
            )));
        }
        if let Some(r) = self.radius {
            let d = (x - &self.unit).norm();
            if d > r {
                return Err(Error::DomainError(format!(
                    "distance {d:e} from the unit exceeds radius {r:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval_mul(&self, x: &Point, y: &Point) -> Result<Point> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok((self.mul)(x, y))
    }

    /// Two-sided inverse if the chart carries one.
    pub fn invert(&self, x: &Point) -> Result<Point> {
        self.check_point(x)?;
        match &self.inverse {
            Some(inv) => {
                let v = inv(x);
                if v.iter().all(|c| c.is_finite()) {
                    Ok(v)
                } else {
                    Err(Error::DivisionByZero {
                        norm: 0.0,
                        eps: crate::octonion::INVERSE_EPS,
                    })
                }
            }
            None => self.divide(Side::Right, x, &self.unit.clone()),
        }
    }

    /// Left: `x` with `a.x = b`. Right: `y` with `y.a = b`.
    pub fn divide(&self, side: Side, a: &Point, b: &Point) -> Result<Point> {
        self.check_point(a)?;
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch("target has wrong length".into()));
        }
        let f = |x: &Point| match side {
            Side::Left => (self.mul)(a, x),
            Side::Right => (self.mul)(x, a),
        };
        let mut x = b - a + &self.unit;
        let max_iter = 50;
        for _ in 0..max_iter {
            let r = f(&x) - b;
            if r.amax() < 1e-13 * b.amax().max(1.0) {
                return Ok(x);
            }
            let j = jacobian(f, &x, self.fd_step);
            let dx = solve_square(&j, &r)?;
            x -= dx;
            if !x.iter().all(|c| c.is_finite()) {
                break;
            }
        }
        let r = (f(&x) - b).norm();
        if r < 1e-10 {
            Ok(x)
        } else {
            Err(Error::NoConvergence {
                iterations: max_iter,
                residual: r,
            })
        }
    }

    /// Unit-law residual `max(|e.x - x|, |x.e - x|)` over the given points.
    pub fn unit_residual(&self, xs: &[Point]) -> f64 {
        xs.iter().fold(0.0, |m, x| {
            let l = ((self.mul)(&self.unit, x) - x).amax();
            let r = ((self.mul)(x, &self.unit) - x).amax();
            m.max(l).max(r)
        })
    }

    /// Smallest singular value over the Jacobians of `l_g` and `r_g` at `g`.
    pub fn translation_sigma_min(&self, g: &Point) -> f64 {
        let jl = jacobian(|y| (self.mul)(g, y), &self.unit, self.fd_step);
        let jr = jacobian(|x| (self.mul)(x, g), &self.unit, self.fd_step);
        crate::numeric::sigma_min(&jl).min(crate::numeric::sigma_min(&jr))
    }

    fn mixed_partials(&self, h: f64) -> Vec<f64> {
        let n = self.dim;
        let e = &self.unit;
        let mut c = vec![0.0; n * n * n];
        let shift = |i: usize, s: f64| {
            let mut p = e.clone();
            p[i] += s;
            p
        };
        for i in 0..n {
            for j in 0..n {
                let pp = (self.mul)(&shift(i, h), &shift(j, h));
                let pm = (self.mul)(&shift(i, h), &shift(j, -h));
                let mp = (self.mul)(&shift(i, -h), &shift(j, h));
                let mm = (self.mul)(&shift(i, -h), &shift(j, -h));
                let d = (pp - pm - mp + mm) / (4.0 * h * h);
                for k in 0..n {
                    c[(k * n + i) * n + j] = d[k];
                }
            }
        }
        c
    }

    /// `c^k_{ij} = d^2 (x.y)^k / dx^i dy^j` at `(e, e)` and the skew algebra
    /// `s^k_{ij} = c^k_{ij} - c^k_{ji}`. Extraction at steps `h` and `2h`
    /// must agree to `1e-4`.
    pub fn extract_structure_constants(&self) -> Result<(Vec<f64>, SkewAlgebra)> {
        let h = self.fd_step * self.unit.norm().max(1.0);
        let c1 = self.mixed_partials(h);
        let c2 = self.mixed_partials(2.0 * h);
        let s1 = SkewAlgebra::antisymmetrize(self.dim, &c1, 1.0);
        let s2 = SkewAlgebra::antisymmetrize(self.dim, &c2, 1.0);
        let noise = s1.max_abs_diff(&s2);
        if !noise.is_finite() || noise > 1e-4 {
            return Err(Error::NumericalNoise(noise));
        }
        Ok((c1, s1))
    }
}

/// The loop `x.y = x + y + [x, y]/2` of a skew algebra.
pub fn bracket_loop(dim: usize, constants: Vec<f64>) -> Result<SmoothLoopChart> {
    let alg = SkewAlgebra::new(dim, constants)?;
    Ok(bracket_loop_of(alg))
}

/// `x . y = x + y + [x,y]/2`. Here `-x` is always a two-sided inverse, and the
/// inverse property holds iff `[x,[x,y]] = 0`; the chart carries the inverse
/// only in that case.
pub fn bracket_loop_of(alg: SkewAlgebra) -> SmoothLoopChart {
    let dim = alg.dim;
    let ip = alg.engel_defect() == 0.0;
    let l = SmoothLoopChart::from_fn(dim, "bracket", move |x, y| {
        x + y + alg.bracket(x, y) * 0.5
    });
    if ip {
        l.with_inverse(|x| -x)
    } else {
        l
    }
}

/// Jacobian of `y -> x.y` at the unit, the matrix of `T l_x`.
pub fn left_translation_jacobian(l: &SmoothLoopChart, x: &Point) -> DMatrix<f64> {
    let m = l.mul_map();
    jacobian(|y| m(x, y), &l.unit, l.fd_step)
}
