//! Discrete Lagrangian mechanics on charted quasiloopoids.
//!
//! `DL(g,h)_i = <-X_i(L)(g) - ->X_i(L)(h)` in the frame dual at `beta(g)`,
//! the step solver for `DL(g, h) = 0, alpha(h) = beta(g)`, and the Legendre
//! transforms `F+L(g)_i = <-X_i(L)(g)`, `F-L(g)_i = ->X_i(L)(g)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie_functor::{basis_section, LieFunctor};
use crate::loopoid::{ChartedQuasiloopoid, FiberSide};
use crate::numeric::{
    condition_number, directional_scalar, jacobian, jacobian_extrapolated, lstsq, point_serde, rank, sigma_min, Point,
    SVD_CUTOFF,
};
use crate::poly::ScalarFn;
use crate::smooth_loop::Side;
use crate::tangent::{cotangent_fibration, CovectorElement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepNewton {
    pub max_iter: usize,
    pub tol: f64,
    /// Fixed step length factor in `(0, 1]`; `None` takes full steps.
    pub damping: Option<f64>,
}

impl Default for StepNewton {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-10,
            damping: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegendreSide {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Serialize)]
pub struct LegendreValue {
    #[serde(with = "point_serde")]
    pub base: Point,
    #[serde(with = "point_serde")]
    pub components: Point,
    /// Distance to the same transform computed through the cotangent fibration.
    pub cotangent_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub composable_gaps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub unit: Vec<f64>,
    /// Smallest singular value of `T F+L` restricted to the alpha-fiber,
    /// over the unit and the probe points.
    pub plus_fiber_sigma_min: f64,
    /// Same for `T F-L` on the beta-fiber.
    pub minus_fiber_sigma_min: f64,
    /// Smallest singular value of `g -> (beta(g), F+L(g))` at the unit.
    pub full_sigma_min: f64,
    /// `T_{eps(u)} F+L (d/dx_j)`, one row per dual frame element.
    pub plus_table: Vec<Vec<f64>>,
    pub minus_table: Vec<Vec<f64>>,
    pub regular: bool,
    pub minus_regular: bool,
    /// `max |F-L(step(g)) - F+L(g)|` over the probe points.
    pub legendre_match_residual: Option<f64>,
    pub p2_error: Option<String>,
    pub probes: usize,
}

/// Relative step of the derivative tables of the Legendre maps.
const TABLE_STEP: f64 = 2e-3;

/// Threshold below which a Legendre Jacobian is declared singular.
pub const REGULARITY_THRESHOLD: f64 = 1e-6;

#[derive(Clone)]
pub struct DiscreteLagrangianSystem {
    pub loopoid: ChartedQuasiloopoid,
    pub lagrangian: ScalarFn,
    pub newton: StepNewton,
    pub fd_step: f64,
}

impl std::fmt::Debug for DiscreteLagrangianSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteLagrangianSystem")
            .field("loopoid", &self.loopoid.name)
            .field("lagrangian", &self.lagrangian)
            .field("newton", &self.newton)
            .finish()
    }
}

impl DiscreteLagrangianSystem {
    pub fn new(loopoid: ChartedQuasiloopoid, lagrangian: ScalarFn) -> Self {
        let fd_step = loopoid.fd_step;
        Self {
            loopoid,
            lagrangian,
            newton: StepNewton::default(),
            fd_step,
        }
    }

    fn functor(&self, u: &Point) -> Result<LieFunctor<'_>> {
        LieFunctor::new(&self.loopoid, u)
    }

    /// `X(L)(g)` for every prolonged basis section on one side.
    fn derivatives(&self, lf: &LieFunctor<'_>, side: Side, g: &Point) -> Result<Point> {
        let r = self.loopoid.rank();
        let dl = self.lagrangian.gradient(g);
        let mut out = DVector::zeros(r);
        for i in 0..r {
            out[i] = dl.dot(&lf.prolong(side, &basis_section(r, i), g)?);
        }
        Ok(out)
    }

    pub fn el_residual(&self, g: &Point, h: &Point) -> Result<Point> {
        let q = &self.loopoid;
        let gap = q.gap(g, h);
        if gap >= q.composable_tol || gap.is_nan() {
            return Err(Error::NotComposable(gap));
        }
        let lf = self.functor(&q.beta(g))?;
        self.residual_with(&lf, g, h)
    }

    fn residual_with(&self, lf: &LieFunctor<'_>, g: &Point, h: &Point) -> Result<Point> {
        Ok(self.derivatives(lf, Side::Left, g)? - self.derivatives(lf, Side::Right, h)?)
    }

    /// Default Newton seed: `eps(beta(g))` moved by `g`'s offset from its
    /// source unit, then snapped onto the alpha-fiber over `beta(g)`.
    pub fn seed(&self, g: &Point) -> Result<Point> {
        let q = &self.loopoid;
        let b = q.beta(g);
        let h0 = q.eps(&b) + (g - q.eps(&q.alpha(g)));
        q.project_alpha(&b, &h0)
    }

    /// Solve `alpha(h) = beta(g)`, `DL(g, h) = 0` for `h` by minimum-norm
    /// Newton steps on all of `h`.
    pub fn step_solve(&self, g: &Point, guess: Option<&Point>) -> Result<Point> {
        let q = &self.loopoid;
        if g.len() != q.dim_g {
            return Err(Error::DimensionMismatch(format!(
                "expected a point of length {}",
                q.dim_g
            )));
        }
        let b = q.beta(g);
        let lf = self.functor(&b)?;
        let system = |h: &Point| -> Point {
            let a = q.alpha(h) - &b;
            let dl = self
                .residual_with(&lf, g, h)
                .unwrap_or_else(|_| DVector::from_element(q.rank(), f64::NAN));
            let mut out = DVector::zeros(q.dim_m + q.rank());
            out.rows_mut(0, q.dim_m).copy_from(&a);
            out.rows_mut(q.dim_m, q.rank()).copy_from(&dl);
            out
        };
        let mut h = match guess {
            Some(x) => x.clone(),
            None => self.seed(g)?,
        };
        let cfg = self.newton;
        let damping = cfg.damping.unwrap_or(1.0);
        let mut f = system(&h);
        let mut last_j = None;
        let mut stalls = 0;
        for _ in 0..cfg.max_iter {
            if !f.iter().all(|v| v.is_finite()) {
                break;
            }
            if f.amax() < cfg.tol {
                return Ok(h);
            }
            let j = jacobian(system, &h, self.fd_step);
            let dx = lstsq(&j, &f);
            h -= dx * damping;
            let prev = f.amax();
            f = system(&h);
            let singular = rank(&j, SVD_CUTOFF) < j.nrows();
            last_j = Some(j);
            // least-squares fixed point of a rank-deficient system
            stalls = if singular && f.amax() > 0.99 * prev { stalls + 1 } else { 0 };
            if stalls >= 3 {
                break;
            }
        }
        if f.iter().all(|v| v.is_finite()) && f.amax() < cfg.tol {
            return Ok(h);
        }
        if let Some(j) = last_j {
            if rank(&j, SVD_CUTOFF) < j.nrows() && f.amax().is_finite() {
                let cond = condition_number(&j);
                let stalled = {
                    let proj = &j * lstsq(&j, &f);
                    (&f - proj).amax() > cfg.tol
                };
                if stalled {
                    return Err(Error::SingularJacobian { condition: cond });
                }
            }
        }
        Err(Error::NoConvergence {
            iterations: cfg.max_iter,
            residual: f.amax(),
        })
    }

    pub fn trajectory(&self, g0: &Point, n: usize, branch_seed: Option<&Point>) -> Result<Trajectory> {
        let q = &self.loopoid;
        let mut points = vec![g0.clone()];
        let mut residuals = Vec::with_capacity(n);
        let mut gaps = Vec::with_capacity(n);
        for step in 0..n {
            let g = points.last().unwrap().clone();
            let guess = if step == 0 { branch_seed } else { None };
            let wrap = |e: Error| Error::AtStep {
                step,
                source: Box::new(e),
            };
            let h = self.step_solve(&g, guess).map_err(wrap)?;
            let res = self.el_residual(&g, &h).map_err(wrap)?;
            residuals.push(res.amax());
            gaps.push(q.gap(&g, &h));
            points.push(h);
        }
        Ok(Trajectory {
            points: points.iter().map(|p| p.iter().copied().collect()).collect(),
            residuals,
            composable_gaps: gaps,
        })
    }

    pub fn legendre(&self, side: LegendreSide, g: &Point) -> Result<LegendreValue> {
        let q = &self.loopoid;
        let (base, lie_side, fiber) = match side {
            LegendreSide::Plus => (q.beta(g), Side::Left, FiberSide::Beta),
            LegendreSide::Minus => (q.alpha(g), Side::Right, FiberSide::Alpha),
        };
        let lf = self.functor(&base)?;
        self.legendre_with(&lf, base, lie_side, fiber, g)
    }

    fn legendre_with(
        &self,
        lf: &LieFunctor<'_>,
        base: Point,
        lie_side: Side,
        fiber: FiberSide,
        g: &Point,
    ) -> Result<LegendreValue> {
        let r = self.loopoid.rank();
        let l = |x: &Point| self.lagrangian.eval(x);
        let mut components = DVector::zeros(r);
        for i in 0..r {
            let v = lf.prolong(lie_side, &basis_section(r, i), g)?;
            components[i] = directional_scalar(l, g, &v, self.fd_step);
        }
        let mu = CovectorElement::new(g.clone(), self.lagrangian.gradient(g))?;
        let via_cotangent = cotangent_fibration(lf, fiber, &mu)?;
        Ok(LegendreValue {
            base,
            cotangent_residual: (&components - via_cotangent).amax(),
            components,
        })
    }

    /// `|F-L(h) - F+L(g)|`, which vanishes exactly when `(g, h)` solves the
    /// discrete Euler-Lagrange equations.
    pub fn legendre_match_residual(&self, g: &Point, h: &Point) -> Result<f64> {
        let plus = self.legendre(LegendreSide::Plus, g)?;
        let minus = self.legendre(LegendreSide::Minus, h)?;
        Ok((minus.components - plus.components).amax())
    }

    pub fn regularity_check(&self, u: &Point, probe_radius: f64) -> Result<RegularityReport> {
        let q = &self.loopoid;
        let e = q.eps(u);
        let lf = self.functor(u)?;
        let plus = |g: &Point| -> Point {
            self.legendre_with(&lf, q.beta(g), Side::Left, FiberSide::Beta, g)
                .map(|v| v.components)
                .unwrap_or_else(|_| DVector::from_element(q.rank(), f64::NAN))
        };
        let minus = |g: &Point| -> Point {
            self.legendre_with(&lf, q.alpha(g), Side::Right, FiberSide::Alpha, g)
                .map(|v| v.components)
                .unwrap_or_else(|_| DVector::from_element(q.rank(), f64::NAN))
        };
        // the tables difference functions that are themselves differenced
        let jp = jacobian_extrapolated(plus, &e, TABLE_STEP);
        let jm = jacobian_extrapolated(minus, &e, TABLE_STEP);
        let mut full = DMatrix::zeros(q.dim_m + q.rank(), q.dim_g);
        full.rows_mut(0, q.dim_m).copy_from(&q.beta_jacobian(&e));
        full.rows_mut(q.dim_m, q.rank()).copy_from(&jp);

        let va = q.vertical_basis(FiberSide::Alpha, &e)?;
        let mut probes = vec![e.clone()];
        for k in 0..va.ncols() {
            for s in [-1.0, 1.0] {
                let v = va.column(k) * (s * probe_radius);
                probes.push(q.project_alpha(u, &(&e + v))?);
            }
        }
        let mut plus_min = f64::INFINITY;
        let mut minus_min = f64::INFINITY;
        let mut matching: Option<f64> = Some(0.0);
        let mut p2_error = None;
        for g in &probes {
            let fa = q.vertical_basis(FiberSide::Alpha, g)?;
            let fb = q.vertical_basis(FiberSide::Beta, g)?;
            plus_min = plus_min.min(sigma_min(&(jacobian(plus, g, self.fd_step) * fa)));
            minus_min = minus_min.min(sigma_min(&(jacobian(minus, g, self.fd_step) * fb)));
            match self.step_solve(g, None).and_then(|h| self.legendre_match_residual(g, &h)) {
                Ok(v) => matching = matching.map(|w| w.max(v)),
                Err(err) => {
                    matching = None;
                    p2_error.get_or_insert(err.to_string());
                }
            }
        }
        if q.rank() == 0 {
            plus_min = f64::INFINITY;
            minus_min = f64::INFINITY;
        }
        let table = |j: &DMatrix<f64>| -> Vec<Vec<f64>> {
            j.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        Ok(RegularityReport {
            unit: u.iter().copied().collect(),
            plus_fiber_sigma_min: plus_min,
            minus_fiber_sigma_min: minus_min,
            full_sigma_min: sigma_min(&full),
            plus_table: table(&jp),
            minus_table: table(&jm),
            regular: plus_min > REGULARITY_THRESHOLD,
            minus_regular: minus_min > REGULARITY_THRESHOLD,
            legendre_match_residual: matching,
            p2_error,
            probes: probes.len(),
        })
    }
}
