//! Tangent multiplication on `TG` and the cotangent fibrations over `A*G`.
//!
//! `X_g • Y_h = T_g r_tau(v_g) + T_h l_sigma(v_h) - T_q (l_sigma ∘ r_tau)(v_q)`
//! with `sigma` a beta-section through `g`, `tau` an alpha-section through
//! `h` and `q = beta(g) = alpha(h)`. There is deliberately no product on `T*G`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie_functor::{basis_section, LieFunctor};
use crate::loopoid::{build_local_section, ChartedQuasiloopoid, FiberSide, LocalSection};
use crate::numeric::{directional, lstsq, newton_project_tight, point_serde, rank, Point};
use crate::smooth_loop::Side;

/// Mismatch allowed between `T beta(v_g)` and `T alpha(v_h)`.
pub const VELOCITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentElement {
    #[serde(with = "point_serde")]
    pub base: Point,
    #[serde(with = "point_serde")]
    pub vector: Point,
}

impl TangentElement {
    pub fn new(base: Point, vector: Point) -> Result<Self> {
        if base.len() != vector.len() {
            return Err(Error::DimensionMismatch(format!(
                "base has {} components, vector {}",
                base.len(),
                vector.len()
            )));
        }
        Ok(Self { base, vector })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovectorElement {
    #[serde(with = "point_serde")]
    pub base: Point,
    #[serde(with = "point_serde")]
    pub covector: Point,
}

impl CovectorElement {
    pub fn new(base: Point, covector: Point) -> Result<Self> {
        if base.len() != covector.len() {
            return Err(Error::DimensionMismatch(format!(
                "base has {} components, covector {}",
                base.len(),
                covector.len()
            )));
        }
        Ok(Self { base, covector })
    }
}

/// How the local sections in the bisection formula are predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectionChoice {
    /// Minimum-norm predictor `(T alpha)^+` or `(T beta)^+`.
    Pseudoinverse,
    /// Predictor `T eps`, valid on both sides since `alpha ∘ eps = beta ∘ eps = id`.
    UnitTangent,
}

fn check_dims(q: &ChartedQuasiloopoid, x: &TangentElement) -> Result<()> {
    if x.base.len() != q.dim_g || x.vector.len() != q.dim_g {
        return Err(Error::DimensionMismatch(format!(
            "tangent element must have {} components",
            q.dim_g
        )));
    }
    Ok(())
}

fn section(
    q: &ChartedQuasiloopoid,
    side: FiberSide,
    through: &Point,
    choice: SectionChoice,
) -> Result<LocalSection> {
    let s = build_local_section(q, side, through)?;
    Ok(match choice {
        SectionChoice::Pseudoinverse => s,
        SectionChoice::UnitTangent => {
            let je = q.eps_jacobian(&s.base);
            s.with_predictor(je)
        }
    })
}

/// Check composability of the velocities and snap `v_h` so that
/// `T alpha(v_h) = T beta(v_g)` exactly.
fn snap(
    q: &ChartedQuasiloopoid,
    x: &TangentElement,
    y: &TangentElement,
) -> Result<(Point, Point)> {
    check_dims(q, x)?;
    check_dims(q, y)?;
    let gap = q.gap(&x.base, &y.base);
    if gap >= q.composable_tol || gap.is_nan() {
        return Err(Error::NotComposable(gap));
    }
    let vq = q.beta_jacobian(&x.base) * &x.vector;
    let ja = q.alpha_jacobian(&y.base);
    let miss = &vq - &ja * &y.vector;
    if miss.norm() >= VELOCITY_TOL {
        return Err(Error::IncompatibleVelocities(miss.norm()));
    }
    let vh = &y.vector + lstsq(&ja, &miss);
    Ok((vq, vh))
}

fn sec_eval(s: &LocalSection, p: &Point) -> Point {
    s.eval(p)
        .unwrap_or_else(|_| DVector::from_element(s.through.len(), f64::NAN))
}

pub fn tangent_multiply(
    q: &ChartedQuasiloopoid,
    x: &TangentElement,
    y: &TangentElement,
) -> Result<TangentElement> {
    tangent_multiply_with(q, x, y, SectionChoice::Pseudoinverse)
}

pub fn tangent_multiply_with(
    q: &ChartedQuasiloopoid,
    x: &TangentElement,
    y: &TangentElement,
    choice: SectionChoice,
) -> Result<TangentElement> {
    let (vq, vh) = snap(q, x, y)?;
    let (g, h) = (&x.base, &y.base);
    let sigma = section(q, FiberSide::Beta, g, choice)?;
    let tau = section(q, FiberSide::Alpha, h, choice)?;
    let m = &q.mul;
    let step = q.fd_step;

    let r_tau = |p: &Point| m(p, &sec_eval(&tau, &q.beta(p)));
    let l_sigma = |p: &Point| m(&sec_eval(&sigma, &q.alpha(p)), p);
    let t1 = directional(r_tau, g, &x.vector, step);
    let t2 = directional(l_sigma, h, &vh, step);
    let base_q = q.beta(g);
    let eq = q.eps(&base_q);
    let ve = q.eps_jacobian(&base_q) * &vq;
    let t3 = directional(|p| l_sigma(&r_tau(p)), &eq, &ve, step);

    let out = t1 + t2 - t3;
    if !out.iter().all(|c| c.is_finite()) {
        return Err(Error::SectionFailure(
            "a section left its domain while differentiating".into(),
        ));
    }
    Ok(TangentElement {
        base: m(g, h),
        vector: out,
    })
}

/// Differentiate `m(gamma_X(t), gamma_Y(t))` where `gamma_X = g + t v_g`
/// and `gamma_Y` is `h + t v_h` projected onto the alpha-fiber over
/// `beta(gamma_X(t))`.
pub fn tangent_multiply_curves(
    q: &ChartedQuasiloopoid,
    x: &TangentElement,
    y: &TangentElement,
) -> Result<TangentElement> {
    let (_, vh) = snap(q, x, y)?;
    let (g, h) = (&x.base, &y.base);
    let scale = x.vector.norm().max(vh.norm()).max(1e-300);
    let dt = q.fd_step * g.norm().max(h.norm()).max(1.0) / scale;
    let at = |t: f64| -> Result<Point> {
        let gx = g + &x.vector * t;
        let a = q.alpha.clone();
        let gy = newton_project_tight(move |p| a(p), &q.beta(&gx), &(h + &vh * t), q.fd_step)?;
        Ok((q.mul)(&gx, &gy))
    };
    let vector = if x.vector.norm() == 0.0 && vh.norm() == 0.0 {
        DVector::zeros(q.dim_g)
    } else {
        (at(dt)? - at(-dt)?) / (2.0 * dt)
    };
    Ok(TangentElement {
        base: (q.mul)(g, h),
        vector,
    })
}

/// `T iota` applied to a tangent element.
pub fn tangent_inverse(q: &ChartedQuasiloopoid, x: &TangentElement) -> Result<TangentElement> {
    check_dims(q, x)?;
    let (inv, _) = q
        .inverse
        .clone()
        .ok_or_else(|| Error::Unsupported(format!("{} carries no inverse", q.name)))?;
    Ok(TangentElement {
        base: inv(&x.base),
        vector: directional(|p| inv(p), &x.base, &x.vector, q.fd_step),
    })
}

/// `(eps(u), T eps(w))`, the tangent unit over `(u, w)`.
pub fn tangent_unit(q: &ChartedQuasiloopoid, u: &Point, w: &Point) -> TangentElement {
    TangentElement {
        base: q.eps(u),
        vector: q.eps_jacobian(u) * w,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentReport {
    pub samples: usize,
    pub alpha_morphism_residual: f64,
    pub beta_morphism_residual: f64,
    pub left_unit_residual: f64,
    pub right_unit_residual: f64,
    /// Smallest rank of `v_h -> X_g • Y_h` on `ker T alpha`; should equal the rank.
    pub left_translation_rank_min: usize,
    pub right_translation_rank_min: usize,
    pub rank: usize,
    pub section_independence_residual: f64,
    pub curve_residual: f64,
    pub inverse_residual: Option<f64>,
}

impl TangentReport {
    pub fn passes(&self, tol: f64) -> bool {
        let ok = |v: f64| v.is_finite() && v < tol;
        ok(self.alpha_morphism_residual)
            && ok(self.beta_morphism_residual)
            && ok(self.left_unit_residual)
            && ok(self.right_unit_residual)
            && self.left_translation_rank_min == self.rank
            && self.right_translation_rank_min == self.rank
            && ok(self.section_independence_residual)
            && ok(self.curve_residual)
            && self.inverse_residual.is_none_or(ok)
    }
}

fn random_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Point {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn diff(a: &TangentElement, b: &TangentElement) -> f64 {
    (&a.base - &b.base).amax().max((&a.vector - &b.vector).amax())
}

/// Linear part of an affine map on a subspace, measured by differences.
fn affine_rank<F>(f: F, basis: &DMatrix<f64>) -> Result<usize>
where
    F: Fn(&Point) -> Result<Point>,
{
    let k = basis.ncols();
    if k == 0 {
        return Ok(0);
    }
    let zero = DVector::zeros(basis.nrows());
    let f0 = f(&zero)?;
    let mut cols = DMatrix::zeros(f0.len(), k);
    for i in 0..k {
        cols.set_column(i, &(f(&basis.column(i).into_owned())? - &f0));
    }
    Ok(rank(&cols, 1e-6))
}

/// Verify the tangent loopoid axioms on random composable tangent pairs.
pub fn check_tangent_loopoid<R: Rng + ?Sized>(
    q: &ChartedQuasiloopoid,
    samples: usize,
    rng: &mut R,
) -> Result<TangentReport> {
    let r = q.rank();
    let mut rep = TangentReport {
        samples,
        alpha_morphism_residual: 0.0,
        beta_morphism_residual: 0.0,
        left_unit_residual: 0.0,
        right_unit_residual: 0.0,
        left_translation_rank_min: r,
        right_translation_rank_min: r,
        rank: r,
        section_independence_residual: 0.0,
        curve_residual: 0.0,
        inverse_residual: q.claims_ip().then_some(0.0),
    };
    for _ in 0..samples {
        let (g, h) = q.sample_pair(rng)?;
        let vg = random_vec(q.dim_g, rng);
        let vq = q.beta_jacobian(&g) * &vg;
        let ja = q.alpha_jacobian(&h);
        let raw = random_vec(q.dim_g, rng);
        let vh = &raw + lstsq(&ja, &(&vq - &ja * &raw));
        let x = TangentElement::new(g.clone(), vg.clone())?;
        let y = TangentElement::new(h.clone(), vh.clone())?;
        let p = tangent_multiply(q, &x, &y)?;

        let ta = |t: &TangentElement| q.alpha_jacobian(&t.base) * &t.vector;
        let tb = |t: &TangentElement| q.beta_jacobian(&t.base) * &t.vector;
        rep.alpha_morphism_residual = rep.alpha_morphism_residual.max((ta(&p) - ta(&x)).amax());
        rep.beta_morphism_residual = rep.beta_morphism_residual.max((tb(&p) - tb(&y)).amax());

        let lu = tangent_unit(q, &q.alpha(&g), &ta(&x));
        rep.left_unit_residual = rep
            .left_unit_residual
            .max(diff(&tangent_multiply(q, &lu, &x)?, &x));
        let ru = tangent_unit(q, &q.beta(&g), &tb(&x));
        rep.right_unit_residual = rep
            .right_unit_residual
            .max(diff(&tangent_multiply(q, &x, &ru)?, &x));

        let ker_a = q.vertical_basis(FiberSide::Alpha, &h)?;
        let lr = affine_rank(
            |w| Ok(tangent_multiply(q, &x, &TangentElement::new(h.clone(), &vh + w)?)?.vector),
            &ker_a,
        )?;
        rep.left_translation_rank_min = rep.left_translation_rank_min.min(lr);
        let ker_b = q.vertical_basis(FiberSide::Beta, &g)?;
        let rr = affine_rank(
            |w| Ok(tangent_multiply(q, &TangentElement::new(g.clone(), &vg + w)?, &y)?.vector),
            &ker_b,
        )?;
        rep.right_translation_rank_min = rep.right_translation_rank_min.min(rr);

        let alt = tangent_multiply_with(q, &x, &y, SectionChoice::UnitTangent)?;
        rep.section_independence_residual = rep.section_independence_residual.max(diff(&p, &alt));
        let curve = tangent_multiply_curves(q, &x, &y)?;
        rep.curve_residual = rep.curve_residual.max(diff(&p, &curve));

        if let Some(worst) = rep.inverse_residual.as_mut() {
            let xi = tangent_inverse(q, &x)?;
            let left = tangent_multiply(q, &x, &xi)?;
            let want_l = tangent_unit(q, &q.alpha(&g), &ta(&x));
            let right = tangent_multiply(q, &xi, &x)?;
            let want_r = tangent_unit(q, &q.beta(&g), &tb(&x));
            *worst = worst.max(diff(&left, &want_l)).max(diff(&right, &want_r));
        }
    }
    Ok(rep)
}

/// `beta~(mu_g)_i = <mu_g, <-X_i(g)>` (side beta, valued at `beta(g)`) or
/// `alpha~(nu_h)_i = <nu_h, ->X_i(h)>` (side alpha, valued at `alpha(h)`).
pub fn cotangent_fibration(
    lf: &LieFunctor<'_>,
    side: FiberSide,
    mu: &CovectorElement,
) -> Result<Point> {
    let q = lf.q;
    if mu.base.len() != q.dim_g || mu.covector.len() != q.dim_g {
        return Err(Error::DimensionMismatch(format!(
            "covector element must have {} components",
            q.dim_g
        )));
    }
    let lie_side = match side {
        FiberSide::Beta => Side::Left,
        FiberSide::Alpha => Side::Right,
    };
    let r = q.rank();
    let mut out = DVector::zeros(r);
    for i in 0..r {
        let xi = lf.prolong(lie_side, &basis_section(r, i), &mu.base)?;
        out[i] = mu.covector.dot(&xi);
    }
    Ok(out)
}

/// Base point of the cotangent fibration's value: `beta(g)` or `alpha(g)`.
pub fn cotangent_base(q: &ChartedQuasiloopoid, side: FiberSide, g: &Point) -> Point {
    match side {
        FiberSide::Beta => q.beta(g),
        FiberSide::Alpha => q.alpha(g),
    }
}
