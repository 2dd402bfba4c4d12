//! The infinitesimal skew algebroid of a charted quasiloopoid.
//!
//! Sections of `AG` are frame-coefficient functions on `M`. They are
//! prolonged to fundamental fields on `G` by differentiating the product
//! along fiber curves through units, and brackets are Lie brackets of
//! prolonged fields at `eps(u)`, projected back into the frame.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loopoid::{ChartedQuasiloopoid, FiberSide};
use crate::numeric::{
    directional, field_bracket, lstsq, newton_project_tight, normalized_kernel, pivot_columns, rank, Point,
    VecMap, SVD_CUTOFF,
};
use crate::smooth_loop::Side;

/// Frame-coefficient function `u -> (X^1(u), ..., X^r(u))`.
pub type Section = VecMap;

pub fn constant_section(c: Point) -> Section {
    Arc::new(move |_| c.clone())
}

pub fn basis_section(r: usize, i: usize) -> Section {
    constant_section(DVector::from_fn(r, |k, _| if k == i { 1.0 } else { 0.0 }))
}

/// Bases of `AG` at one unit point.
#[derive(Debug, Clone)]
pub struct AlgebroidFrame {
    pub u: Point,
    pub rank: usize,
    /// Columns span `ker T alpha` at `eps(u)`.
    pub alpha_vertical: DMatrix<f64>,
    /// Column `i` lies in `ker T beta` and in the normal class of column `i`
    /// of `alpha_vertical`.
    pub beta_vertical: DMatrix<f64>,
    /// Columns of `T eps`.
    pub tm_basis: DMatrix<f64>,
    /// `T beta` applied to the alpha-vertical basis.
    pub rho_left: DMatrix<f64>,
    /// `T alpha` applied to the beta-vertical basis.
    pub rho_right: DMatrix<f64>,
    pub pivots: Vec<usize>,
}

impl AlgebroidFrame {
    pub fn vertical(&self, side: Side) -> &DMatrix<f64> {
        match side {
            Side::Left => &self.alpha_vertical,
            Side::Right => &self.beta_vertical,
        }
    }

    pub fn anchor_matrix(&self, side: Side) -> &DMatrix<f64> {
        match side {
            Side::Left => &self.rho_left,
            Side::Right => &self.rho_right,
        }
    }

    /// Largest `|T alpha X^a|`, `|T beta X^b|` and distance of `X^a - X^b`
    /// from `TM`.
    pub fn invariant_residuals(&self, q: &ChartedQuasiloopoid) -> (f64, f64, f64) {
        let e = q.eps(&self.u);
        let ja = q.alpha_jacobian(&e);
        let jb = q.beta_jacobian(&e);
        let ra = (&ja * &self.alpha_vertical).amax();
        let rb = (&jb * &self.beta_vertical).amax();
        let diff = &self.alpha_vertical - &self.beta_vertical;
        let mut worst = 0.0f64;
        for c in 0..diff.ncols() {
            let d = diff.column(c).into_owned();
            let coef = lstsq(&self.tm_basis, &d);
            worst = worst.max((&self.tm_basis * coef - d).amax());
        }
        (ra, rb, worst)
    }
}

fn build_frame(q: &ChartedQuasiloopoid, u: &Point, pivots: &[usize]) -> Result<AlgebroidFrame> {
    let e = q.eps(u);
    let ja = q.alpha_jacobian(&e);
    let jb = q.beta_jacobian(&e);
    let je = q.eps_jacobian(u);
    let av = normalized_kernel(&ja, pivots)?;
    let rho_left = &jb * &av;
    let bv = &av - &je * &rho_left;
    let rho_right = &ja * &bv;
    Ok(AlgebroidFrame {
        u: u.clone(),
        rank: q.rank(),
        alpha_vertical: av,
        beta_vertical: bv,
        tm_basis: je,
        rho_left,
        rho_right,
        pivots: pivots.to_vec(),
    })
}

/// Frame at `u` with pivots chosen at `u`.
pub fn algebroid_frame(q: &ChartedQuasiloopoid, u: &Point) -> Result<AlgebroidFrame> {
    let e = q.eps(u);
    let ja = q.alpha_jacobian(&e);
    let jb = q.beta_jacobian(&e);
    for (name, j) in [("alpha", &ja), ("beta", &jb)] {
        let r = rank(j, 1e-9);
        if r != q.dim_m {
            return Err(Error::RankDeficient(format!(
                "T {name} has rank {r} at eps(u), expected {}",
                q.dim_m
            )));
        }
    }
    let pivots = pivot_columns(&ja, q.dim_m)?;
    build_frame(q, u, &pivots)
}

/// A smooth frame field near a reference point: the pivot columns are
/// fixed at the reference so the normalized kernels vary smoothly.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub reference: Point,
    pub pivots: Vec<usize>,
}

impl FrameField {
    pub fn new(q: &ChartedQuasiloopoid, reference: &Point) -> Result<Self> {
        let f = algebroid_frame(q, reference)?;
        Ok(Self {
            reference: reference.clone(),
            pivots: f.pivots,
        })
    }

    pub fn frame(&self, q: &ChartedQuasiloopoid, u: &Point) -> Result<AlgebroidFrame> {
        build_frame(q, u, &self.pivots)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketValue {
    /// Frame coefficients of the bracket.
    pub coeffs: Vec<f64>,
    /// Component along `TM` left over after projecting into the frame.
    pub tm_component: Vec<f64>,
}

/// Lie-functor computations for one quasiloopoid and frame field.
#[derive(Clone)]
pub struct LieFunctor<'a> {
    pub q: &'a ChartedQuasiloopoid,
    pub field: FrameField,
    /// Relative step for derivatives of prolonged fields.
    pub outer_step: f64,
    /// Relative step along fiber curves.
    pub inner_step: f64,
}

impl<'a> LieFunctor<'a> {
    pub fn new(q: &'a ChartedQuasiloopoid, reference: &Point) -> Result<Self> {
        Ok(Self {
            q,
            field: FrameField::new(q, reference)?,
            outer_step: 1e-4,
            inner_step: 1e-5,
        })
    }

    pub fn frame(&self, u: &Point) -> Result<AlgebroidFrame> {
        self.field.frame(self.q, u)
    }

    /// Point on the alpha-fiber (left) or beta-fiber (right) over `u`
    /// reached from `eps(u) + t v`.
    fn fiber_curve(&self, side: Side, u: &Point, v: &Point, t: f64) -> Result<Point> {
        let x0 = self.q.eps(u) + v * t;
        let map = match side {
            Side::Left => self.q.alpha.clone(),
            Side::Right => self.q.beta.clone(),
        };
        newton_project_tight(move |x| map(x), u, &x0, self.q.fd_step)
    }

    /// `<-X(g) = T l_g (X^alpha)` at `beta(g)` for the left side,
    /// `->X(g) = T r_g (X^beta)` at `alpha(g)` for the right side.
    pub fn prolong(&self, side: Side, x: &Section, g: &Point) -> Result<Point> {
        let u = match side {
            Side::Left => self.q.beta(g),
            Side::Right => self.q.alpha(g),
        };
        let fr = self.frame(&u)?;
        let v = fr.vertical(side) * x(&u);
        let vn = v.norm();
        if vn == 0.0 {
            return Ok(DVector::zeros(self.q.dim_g));
        }
        let h = self.inner_step * self.q.eps(&u).norm().max(1.0) / vn;
        let cp = self.fiber_curve(side, &u, &v, h)?;
        let cm = self.fiber_curve(side, &u, &v, -h)?;
        let m = &self.q.mul;
        let (p, n) = match side {
            Side::Left => (m(g, &cp), m(g, &cm)),
            Side::Right => (m(&cp, g), m(&cm, g)),
        };
        Ok((p - n) / (2.0 * h))
    }

    fn field_fn(&self, side: Side, x: &Section) -> impl Fn(&Point) -> Point + '_ {
        let x = x.clone();
        move |g: &Point| {
            self.prolong(side, &x, g)
                .unwrap_or_else(|_| DVector::from_element(g.len(), f64::NAN))
        }
    }

    /// `[X, Y]_l(u) = [<-X, <-Y](eps(u))` expressed in the alpha-vertical
    /// frame, or the right bracket in the beta-vertical frame.
    pub fn bracket(&self, side: Side, x: &Section, y: &Section, u: &Point) -> Result<BracketValue> {
        let e = self.q.eps(u);
        let w = field_bracket(
            self.field_fn(side, x),
            self.field_fn(side, y),
            &e,
            self.outer_step,
        );
        if !w.iter().all(|c| c.is_finite()) {
            return Err(Error::FrameSingular(
                "prolonged field left the composability slab".into(),
            ));
        }
        let fr = self.frame(u)?;
        let r = fr.rank;
        let m = self.q.dim_m;
        let mut a = DMatrix::zeros(self.q.dim_g, r + m);
        a.columns_mut(0, r).copy_from(fr.vertical(side));
        a.columns_mut(r, m).copy_from(&fr.tm_basis);
        if rank(&a, SVD_CUTOFF) < r + m {
            return Err(Error::FrameSingular(
                "vertical basis and TM are not complementary".into(),
            ));
        }
        let c = lstsq(&a, &w);
        Ok(BracketValue {
            coeffs: c.rows(0, r).iter().copied().collect(),
            tm_component: c.rows(r, m).iter().copied().collect(),
        })
    }

    /// Structure constants of constant frame sections, flat `[k][i][j]`.
    pub fn bracket_constants(&self, side: Side, u: &Point) -> Result<Vec<f64>> {
        let r = self.q.rank();
        let mut out = vec![0.0; r * r * r];
        for i in 0..r {
            for j in (i + 1)..r {
                let b = self.bracket(side, &basis_section(r, i), &basis_section(r, j), u)?;
                for k in 0..r {
                    out[(k * r + i) * r + j] = b.coeffs[k];
                    out[(k * r + j) * r + i] = -b.coeffs[k];
                }
            }
        }
        Ok(out)
    }

    pub fn anchor(&self, side: Side, x: &Point, u: &Point) -> Result<Point> {
        let fr = self.frame(u)?;
        Ok(anchor(&fr, x, side))
    }

    /// `|rho[X_i, X_j] - [rho X_i, rho X_j]|` over basis pairs at `u`.
    pub fn almost_lie_residual(&self, side: Side, u: &Point) -> Result<f64> {
        let r = self.q.rank();
        let mut worst = 0.0f64;
        if self.q.dim_m == 0 {
            return Ok(0.0);
        }
        for i in 0..r {
            for j in (i + 1)..r {
                let b = self.bracket(side, &basis_section(r, i), &basis_section(r, j), u)?;
                let fr = self.frame(u)?;
                let lhs = fr.anchor_matrix(side) * DVector::from_vec(b.coeffs);
                let rho = |k: usize| {
                    move |p: &Point| match self.frame(p) {
                        Ok(f) => f.anchor_matrix(side).column(k).into_owned(),
                        Err(_) => DVector::from_element(p.len(), f64::NAN),
                    }
                };
                let rhs = field_bracket(rho(i), rho(j), u, self.outer_step);
                worst = worst.max((lhs - rhs).amax());
            }
        }
        Ok(worst)
    }

    /// `|T iota (X^alpha_i) + X^beta_i|` over the frame at `u`.
    pub fn inverse_exchange_residual(&self, u: &Point) -> Result<f64> {
        let (inv, _) = self
            .q
            .inverse
            .clone()
            .ok_or_else(|| Error::Unsupported("no inverse map".into()))?;
        let fr = self.frame(u)?;
        let e = self.q.eps(u);
        let mut worst = 0.0f64;
        for i in 0..fr.rank {
            let v = fr.alpha_vertical.column(i).into_owned();
            let ti = directional(|g| inv(g), &e, &v, self.inner_step);
            worst = worst.max((ti + fr.beta_vertical.column(i)).amax());
        }
        Ok(worst)
    }

    /// `|[X_i, X_j]_l + [X_i, X_j]_r|` over basis pairs at `u`.
    pub fn sign_residual(&self, u: &Point) -> Result<f64> {
        let l = self.bracket_constants(Side::Left, u)?;
        let r = self.bracket_constants(Side::Right, u)?;
        Ok(l.iter().zip(&r).fold(0.0, |m, (a, b)| m.max((a + b).abs())))
    }

    /// `[<-X, ->Y](eps(u))`, which vanishes on loops.
    pub fn mixed_bracket(&self, x: &Section, y: &Section, u: &Point) -> Point {
        field_bracket(
            self.field_fn(Side::Left, x),
            self.field_fn(Side::Right, y),
            &self.q.eps(u),
            self.outer_step,
        )
    }

    /// `g_ij = <-X_i (<-X_j F)` at `eps(u)`, symmetrized.
    pub fn contrast_metric<F>(&self, f: F, u: &Point) -> Result<MetricReport>
    where
        F: Fn(&Point) -> f64 + Clone,
    {
        // first jet along M: value and gradient at eps(u) and nearby units
        let mut jet = 0.0f64;
        for d in 0..=self.q.dim_m {
            let mut p = u.clone();
            if d > 0 {
                p[d - 1] += 0.1;
            }
            let e = self.q.eps(&p);
            let grad = crate::numeric::gradient(f.clone(), &e, self.inner_step);
            jet = jet.max(f(&e).abs()).max(grad.amax());
        }
        if jet > 1e-7 {
            return Err(Error::JetNotVanishing(jet));
        }
        let r = self.q.rank();
        let e = self.q.eps(u);
        let mut g = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                let xj = basis_section(r, j);
                let xi = basis_section(r, i);
                let fj = |p: &Point| -> f64 {
                    match self.prolong(Side::Left, &xj, p) {
                        Ok(v) => {
                            let fv = f.clone();
                            crate::numeric::directional_scalar(fv, p, &v, self.inner_step)
                        }
                        Err(_) => f64::NAN,
                    }
                };
                let vi = self.prolong(Side::Left, &xi, &e)?;
                g[(i, j)] = crate::numeric::directional_scalar(fj, &e, &vi, self.outer_step);
            }
        }
        let asym = (&g - g.transpose()).amax();
        let sym = (&g + g.transpose()) * 0.5;
        Ok(MetricReport {
            metric: sym,
            asymmetry: asym,
            jet,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub metric: DMatrix<f64>,
    pub asymmetry: f64,
    pub jet: f64,
}

/// `rho_l(X) = T beta (X^alpha)`, `rho_r(X) = T alpha (X^beta)`.
pub fn anchor(frame: &AlgebroidFrame, x: &Point, side: Side) -> Point {
    frame.anchor_matrix(side) * x
}

#[derive(Debug, Clone, Serialize)]
pub struct AlmostLieReport {
    pub samples: usize,
    pub left_residual: f64,
    pub right_residual: f64,
    pub anchor_opposition: f64,
    /// `|[X,Y]_l + [X,Y]_r|`; asserted only for inverse-property instances.
    pub sign_residual: f64,
}

/// Almost-Lie residuals of both brackets, anchor opposition `rho_r = -rho_l`
/// and the left/right sign residual at sampled unit points.
pub fn check_almost_lie<R: Rng + ?Sized>(
    q: &ChartedQuasiloopoid,
    samples: usize,
    rng: &mut R,
) -> Result<AlmostLieReport> {
    let mut rep = AlmostLieReport {
        samples,
        left_residual: 0.0,
        right_residual: 0.0,
        anchor_opposition: 0.0,
        sign_residual: 0.0,
    };
    for _ in 0..samples {
        let u = q.sample_base(rng);
        let lf = LieFunctor::new(q, &u)?;
        rep.left_residual = rep.left_residual.max(lf.almost_lie_residual(Side::Left, &u)?);
        rep.right_residual = rep.right_residual.max(lf.almost_lie_residual(Side::Right, &u)?);
        let fr = lf.frame(&u)?;
        rep.anchor_opposition = rep
            .anchor_opposition
            .max((&fr.rho_left + &fr.rho_right).amax());
        rep.sign_residual = rep.sign_residual.max(lf.sign_residual(&u)?);
    }
    Ok(rep)
}

/// Which fiber a side's vertical basis is tangent to.
pub fn fiber_of(side: Side) -> FiberSide {
    match side {
        Side::Left => FiberSide::Alpha,
        Side::Right => FiberSide::Beta,
    }
}
