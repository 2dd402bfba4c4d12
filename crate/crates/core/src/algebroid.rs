//! Skew algebroids in a local frame: structure functions `c^k_{ij}(x)` and
//! anchor `rho^b_i(x)`, the Leibniz bracket of sections, and prolongation
//! over a fibration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loopoid::FibrationChart;
use crate::numeric::{field_bracket, jacobian, lstsq, rank, Point, FD_STEP};
use crate::poly::{Polynomial, ScalarFn};

#[derive(Debug, Clone)]
pub struct SkewAlgebroidChart {
    pub base_dim: usize,
    pub rank: usize,
    /// `c[(k * r + i) * r + j]`
    pub c: Vec<ScalarFn>,
    /// `rho[b * r + i]`
    pub rho: Vec<ScalarFn>,
    pub fd_step: f64,
}

/// Portable form: `c[k][i][j]` and `rho[b][i]` as polynomials on the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewAlgebroidSpec {
    pub base_dim: usize,
    pub rank: usize,
    pub c: Vec<Vec<Vec<Polynomial>>>,
    pub rho: Vec<Vec<Polynomial>>,
}

impl SkewAlgebroidSpec {
    pub fn build(&self) -> Result<SkewAlgebroidChart> {
        let (m, r) = (self.base_dim, self.rank);
        let schema = |path: String, message: String| Error::SchemaError { path, message };
        if self.c.len() != r {
            return Err(schema("$.body.c".into(), format!("expected {r} rows")));
        }
        let mut c = Vec::with_capacity(r * r * r);
        for (k, ck) in self.c.iter().enumerate() {
            if ck.len() != r {
                return Err(schema(format!("$.body.c[{k}]"), format!("expected {r} rows")));
            }
            for (i, cki) in ck.iter().enumerate() {
                if cki.len() != r {
                    return Err(schema(
                        format!("$.body.c[{k}][{i}]"),
                        format!("expected {r} entries"),
                    ));
                }
                for (j, p) in cki.iter().enumerate() {
                    p.check_arity(m).map_err(|e| {
                        schema(format!("$.body.c[{k}][{i}][{j}]"), e.to_string())
                    })?;
                    c.push(ScalarFn::Poly(p.clone()));
                }
            }
        }
        if self.rho.len() != m {
            return Err(schema("$.body.rho".into(), format!("expected {m} rows")));
        }
        let mut rho = Vec::with_capacity(m * r);
        for (b, rb) in self.rho.iter().enumerate() {
            if rb.len() != r {
                return Err(schema(format!("$.body.rho[{b}]"), format!("expected {r} entries")));
            }
            for (i, p) in rb.iter().enumerate() {
                p.check_arity(m)
                    .map_err(|e| schema(format!("$.body.rho[{b}][{i}]"), e.to_string()))?;
                rho.push(ScalarFn::Poly(p.clone()));
            }
        }
        let chart = SkewAlgebroidChart {
            base_dim: m,
            rank: r,
            c,
            rho,
            fd_step: FD_STEP,
        };
        chart.check_antisymmetry(&sample_grid(m))?;
        Ok(chart)
    }
}

fn sample_grid(m: usize) -> Vec<Point> {
    (0..5)
        .map(|s| DVector::from_fn(m, |i, _| 0.37 * s as f64 - 0.71 + 0.13 * i as f64))
        .collect()
}

impl SkewAlgebroidChart {
    /// Constant structure functions and anchor.
    pub fn constant(base_dim: usize, rank: usize, c: &[f64], rho: &DMatrix<f64>) -> Self {
        let k = |v: f64| ScalarFn::Poly(Polynomial::constant(v, base_dim));
        Self {
            base_dim,
            rank,
            c: c.iter().map(|&v| k(v)).collect(),
            rho: (0..base_dim)
                .flat_map(|b| (0..rank).map(move |i| (b, i)))
                .map(|(b, i)| k(rho[(b, i)]))
                .collect(),
            fd_step: FD_STEP,
        }
    }

    /// The tangent bundle of `R^m` in the coordinate frame.
    pub fn tangent_bundle(m: usize) -> Self {
        Self::constant(m, m, &vec![0.0; m * m * m], &DMatrix::identity(m, m))
    }

    pub fn c_at(&self, x: &Point) -> Vec<f64> {
        self.c.iter().map(|f| f.eval(x)).collect()
    }

    pub fn rho_at(&self, x: &Point) -> DMatrix<f64> {
        DMatrix::from_fn(self.base_dim, self.rank, |b, i| {
            self.rho[b * self.rank + i].eval(x)
        })
    }

    fn c_idx(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.rank + i) * self.rank + j
    }

    pub fn check_antisymmetry(&self, xs: &[Point]) -> Result<()> {
        let r = self.rank;
        for x in xs {
            let c = self.c_at(x);
            for k in 0..r {
                for i in 0..r {
                    for j in 0..r {
                        let (a, b) = (c[self.c_idx(k, i, j)], c[self.c_idx(k, j, i)]);
                        if (a + b).abs() > 1e-9 * a.abs().max(1.0) {
                            return Err(Error::NotAntisymmetric(format!(
                                "c^{k}_{i}{j} = {a}, c^{k}_{j}{i} = {b} at {:?}",
                                x.as_slice()
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `rho(sum f^i e_i)` at `x`.
    pub fn anchor(&self, f: &[ScalarFn], x: &Point) -> Point {
        let coeffs = DVector::from_fn(self.rank, |i, _| f[i].eval(x));
        self.rho_at(x) * coeffs
    }

    /// `[f^i e_i, g^j e_j] = f^i g^j c^k_{ij} e_k + rho(X)(g^k) e_k - rho(Y)(f^k) e_k`.
    pub fn leibniz_bracket(&self, f: &[ScalarFn], g: &[ScalarFn], x: &Point) -> Result<Point> {
        let r = self.rank;
        if f.len() != r || g.len() != r {
            return Err(Error::DimensionMismatch(format!(
                "sections need {r} coefficient functions"
            )));
        }
        let c = self.c_at(x);
        let fv: Vec<f64> = f.iter().map(|s| s.eval(x)).collect();
        let gv: Vec<f64> = g.iter().map(|s| s.eval(x)).collect();
        let rx = self.anchor(f, x);
        let ry = self.anchor(g, x);
        Ok(DVector::from_fn(r, |k, _| {
            let mut v = 0.0;
            for i in 0..r {
                for j in 0..r {
                    v += fv[i] * gv[j] * c[self.c_idx(k, i, j)];
                }
            }
            v + g[k].gradient(x).dot(&rx) - f[k].gradient(x).dot(&ry)
        }))
    }

    /// `[X, hY] - h[X,Y] - rho(X)(h) Y` at `x`.
    pub fn leibniz_residual(
        &self,
        f: &[ScalarFn],
        g: &[ScalarFn],
        h: &ScalarFn,
        x: &Point,
    ) -> Result<f64> {
        let hv = h.eval(x);
        let hg: Vec<ScalarFn> = g
            .iter()
            .map(|gi| {
                let (h, gi) = (h.clone(), gi.clone());
                ScalarFn::callable(move |p| h.eval(p) * gi.eval(p))
            })
            .collect();
        let lhs = self.leibniz_bracket(f, &hg, x)?;
        let xy = self.leibniz_bracket(f, g, x)?;
        let rh = h.gradient(x).dot(&self.anchor(f, x));
        let gy = DVector::from_fn(self.rank, |k, _| g[k].eval(x));
        Ok((lhs - xy * hv - gy * rh).amax())
    }

    /// `max |rho([e_i, e_j]) - [rho e_i, rho e_j]|` over basis pairs at `x`.
    pub fn almost_lie_residual(&self, x: &Point) -> f64 {
        let (m, r) = (self.base_dim, self.rank);
        let c = self.c_at(x);
        let rho = self.rho_at(x);
        // d rho^b_i / d x^a
        let grads: Vec<Point> = self.rho.iter().map(|f| f.gradient(x)).collect();
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in (i + 1)..r {
                for b in 0..m {
                    let lhs: f64 = (0..r).map(|k| c[self.c_idx(k, i, j)] * rho[(b, k)]).sum();
                    let mut rhs = 0.0;
                    for a in 0..m {
                        rhs += rho[(a, i)] * grads[b * r + j][a] - rho[(a, j)] * grads[b * r + i][a];
                    }
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        worst
    }

    /// Largest Jacobiator component of constant frame sections at `x`.
    pub fn jacobi_defect(&self, x: &Point) -> f64 {
        let r = self.rank;
        let basis = |i: usize| -> Vec<ScalarFn> {
            (0..r)
                .map(|k| ScalarFn::Poly(Polynomial::constant(if k == i { 1.0 } else { 0.0 }, self.base_dim)))
                .collect()
        };
        let mut worst = 0.0f64;
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    let bracket_fn = |a: Vec<ScalarFn>, b: Vec<ScalarFn>| -> Vec<ScalarFn> {
                        let me = self.clone();
                        (0..r)
                            .map(|comp| {
                                let (a, b, me) = (a.clone(), b.clone(), me.clone());
                                ScalarFn::callable(move |p| {
                                    me.leibniz_bracket(&a, &b, p).map(|v| v[comp]).unwrap_or(f64::NAN)
                                })
                            })
                            .collect()
                    };
                    let (ei, ej, ek) = (basis(i), basis(j), basis(k));
                    let t1 = self.leibniz_bracket(&ei, &bracket_fn(ej.clone(), ek.clone()), x);
                    let t2 = self.leibniz_bracket(&ej, &bracket_fn(ek.clone(), ei.clone()), x);
                    let t3 = self.leibniz_bracket(&ek, &bracket_fn(ei, ej), x);
                    if let (Ok(a), Ok(b), Ok(c)) = (t1, t2, t3) {
                        worst = worst.max((a + b + c).amax());
                    }
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlmostLieChartReport {
    pub samples: usize,
    pub almost_lie_residual: f64,
    pub jacobi_defect: f64,
}

pub fn check_almost_lie_chart<R: Rng + ?Sized>(
    a: &SkewAlgebroidChart,
    samples: usize,
    rng: &mut R,
) -> AlmostLieChartReport {
    let mut res = 0.0f64;
    let mut jac = 0.0f64;
    for _ in 0..samples {
        let x = DVector::from_fn(a.base_dim, |_, _| rng.random_range(-1.0..1.0));
        res = res.max(a.almost_lie_residual(&x));
        jac = jac.max(a.jacobi_defect(&x));
    }
    AlmostLieChartReport {
        samples,
        almost_lie_residual: res,
        jacobi_defect: jac,
    }
}

/// The prolongation `P^pi E = {(X, V) : rho(X) = T pi (V)}` in the frame
/// `b_i = (e_i, H_i)`, `b_{r+a} = (0, d lift / d f^a)`, where `H_i` lifts
/// `rho(e_i)` horizontally through the trivialization of `pi`. The anchor is
/// the `TP` component and the bracket is
/// `[(X,V),(Y,W)] = ([X,Y]_E, [V,W])`.
#[derive(Clone)]
pub struct ProlongedAlgebroid {
    pub base: SkewAlgebroidChart,
    pub pi: FibrationChart,
}

impl ProlongedAlgebroid {
    pub fn rank(&self) -> usize {
        self.base.rank + self.pi.fiber_dim()
    }

    /// Frame vectors in `TP` (anchor images), one column per generator.
    pub fn anchor_frame(&self, p: &Point) -> DMatrix<f64> {
        let (r, k, dp) = (self.base.rank, self.pi.fiber_dim(), self.pi.dim_p);
        let m = (self.pi.pi)(p);
        let f = (self.pi.fiber)(p);
        let (dm, df) = (self.pi.lift_jacobian)(&m, &f);
        let rho = self.base.rho_at(&m);
        let mut out = DMatrix::zeros(dp, r + k);
        out.columns_mut(0, r).copy_from(&(&dm * rho));
        out.columns_mut(r, k).copy_from(&df);
        out
    }

    /// Structure constants `C^K_{IJ}(p)` and the part of each bracket's
    /// `TP` component that is not tangent to the fibers after removing the
    /// horizontal lifts; that part vanishes when the base is almost Lie.
    pub fn structure_at(&self, p: &Point, outer: f64) -> (Vec<f64>, f64) {
        let (r, k) = (self.base.rank, self.pi.fiber_dim());
        let n = r + k;
        let m = (self.pi.pi)(p);
        let cm = self.base.c_at(&m);
        let frame = self.anchor_frame(p);
        let f = (self.pi.fiber)(p);
        let (_, df) = (self.pi.lift_jacobian)(&m, &f);
        let mut out = vec![0.0; n * n * n];
        let mut defect = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let col = |c: usize| move |q: &Point| self.anchor_frame(q).column(c).into_owned();
                let vw = field_bracket(col(i), col(j), p, outer);
                let mut kappa = DVector::zeros(n);
                if i < r && j < r {
                    for l in 0..r {
                        kappa[l] = cm[(l * r + i) * r + j];
                    }
                }
                let horizontal = frame.columns(0, r) * kappa.rows(0, r);
                let rest = vw - horizontal;
                if k > 0 {
                    let vert = lstsq(&df, &rest);
                    defect = defect.max((&df * &vert - &rest).amax());
                    kappa.rows_mut(r, k).copy_from(&vert);
                } else {
                    defect = defect.max(rest.amax());
                }
                for l in 0..n {
                    out[(l * n + i) * n + j] = kappa[l];
                    out[(l * n + j) * n + i] = -kappa[l];
                }
            }
        }
        (out, defect)
    }

    /// Chart with callable structure functions and anchor.
    pub fn to_chart(&self) -> SkewAlgebroidChart {
        let n = self.rank();
        let dp = self.pi.dim_p;
        let me = Arc::new(self.clone());
        let mut c = Vec::with_capacity(n * n * n);
        for kk in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let me = me.clone();
                    c.push(ScalarFn::callable(move |p| {
                        me.structure_at(p, 1e-4).0[(kk * n + i) * n + j]
                    }));
                }
            }
        }
        let mut rho = Vec::with_capacity(dp * n);
        for b in 0..dp {
            for i in 0..n {
                let me = me.clone();
                rho.push(ScalarFn::callable(move |p| me.anchor_frame(p)[(b, i)]));
            }
        }
        SkewAlgebroidChart {
            base_dim: dp,
            rank: n,
            c,
            rho,
            fd_step: FD_STEP,
        }
    }
}

/// Prolong `a` over `pi`, checking that `pi` is a submersion whose fiber
/// dimension is constant on samples.
pub fn prolong_algebroid(a: &SkewAlgebroidChart, pi: &FibrationChart) -> Result<ProlongedAlgebroid> {
    if pi.dim_m != a.base_dim {
        return Err(Error::DimensionMismatch(format!(
            "fibration base {} but algebroid base {}",
            pi.dim_m, a.base_dim
        )));
    }
    let mut kernel_dims = Vec::new();
    for s in 0..8 {
        let p = DVector::from_fn(pi.dim_p, |i, _| 0.3 * s as f64 - 1.0 + 0.17 * i as f64);
        let j = jacobian(|x| (pi.pi)(x), &p, FD_STEP);
        let r = rank(&j, 1e-9);
        if r < pi.dim_m {
            return Err(Error::NotSubmersion(format!(
                "rank {r} at {:?}, base dimension {}",
                p.as_slice(),
                pi.dim_m
            )));
        }
        kernel_dims.push(pi.dim_p - r);
    }
    if kernel_dims.iter().any(|&d| d != kernel_dims[0]) {
        return Err(Error::RankNotConstant(format!(
            "fiber dimensions {kernel_dims:?}"
        )));
    }
    Ok(ProlongedAlgebroid {
        base: a.clone(),
        pi: pi.clone(),
    })
}
