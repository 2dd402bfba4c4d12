//! Charted quasiloopoids `G => M`: source and target submersions, a unit
//! embedding and a partial product on a tolerance slab `|beta(g) - alpha(h)| < tol`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{
    jacobian, newton_project, newton_project_tight, normalized_kernel, pivot_columns, rank, sigma_min,
    BinMap, NewtonConfig, Point, VecMap, FD_STEP, SVD_CUTOFF,
};
use crate::poly::{Polynomial, ScalarFn};
use crate::smooth_loop::SmoothLoopChart;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseKind {
    /// `g^{-1}(gh) = h = (hg)g^{-1}`.
    TwoSided,
    /// Only `g^{-1}(gh) = h` is claimed.
    LeftOnly,
}

/// Global chart of the alpha-fibration: `(alpha(g), xi) <-> g`.
#[derive(Clone)]
pub struct AlphaFiberChart {
    pub fiber_dim: usize,
    pub to_g: BinMap,
    pub to_fiber: VecMap,
}

#[derive(Clone)]
pub struct ChartedQuasiloopoid {
    pub name: String,
    pub dim_g: usize,
    pub dim_m: usize,
    pub alpha: VecMap,
    pub beta: VecMap,
    pub unit_embed: VecMap,
    pub mul: BinMap,
    pub composable_tol: f64,
    pub claims_loopoid: bool,
    pub inverse: Option<(VecMap, InverseKind)>,
    pub alpha_chart: Option<AlphaFiberChart>,
    pub fd_step: f64,
    /// Points of `G` are sampled in the box `center +- radius`.
    pub sample_center: Point,
    pub sample_radius: f64,
}

impl fmt::Debug for ChartedQuasiloopoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartedQuasiloopoid")
            .field("name", &self.name)
            .field("dim_g", &self.dim_g)
            .field("dim_m", &self.dim_m)
            .field("claims_loopoid", &self.claims_loopoid)
            .field("inverse", &self.inverse.as_ref().map(|(_, k)| *k))
            .finish()
    }
}

impl ChartedQuasiloopoid {
    pub fn rank(&self) -> usize {
        self.dim_g - self.dim_m
    }

    pub fn claims_ip(&self) -> bool {
        matches!(self.inverse, Some((_, InverseKind::TwoSided)))
    }

    pub fn alpha(&self, g: &Point) -> Point {
        (self.alpha)(g)
    }

    pub fn beta(&self, g: &Point) -> Point {
        (self.beta)(g)
    }

    pub fn eps(&self, u: &Point) -> Point {
        (self.unit_embed)(u)
    }

    pub fn gap(&self, g: &Point, h: &Point) -> f64 {
        (self.beta(g) - self.alpha(h)).norm()
    }

    pub fn composable(&self, g: &Point, h: &Point) -> bool {
        self.gap(g, h) < self.composable_tol
    }

    pub fn multiply(&self, g: &Point, h: &Point) -> Result<Point> {
        if g.len() != self.dim_g || h.len() != self.dim_g {
            return Err(Error::DimensionMismatch(format!(
                "expected points of length {}",
                self.dim_g
            )));
        }
        let gap = self.gap(g, h);
        if gap >= self.composable_tol || gap.is_nan() {
            return Err(Error::NotComposable(gap));
        }
        Ok((self.mul)(g, h))
    }

    pub fn invert(&self, g: &Point) -> Result<Point> {
        match &self.inverse {
            Some((inv, _)) => Ok(inv(g)),
            None => Err(Error::Unsupported(format!("{} carries no inverse", self.name))),
        }
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            fd_step: self.fd_step,
            ..NewtonConfig::default()
        }
    }

    /// Snap `h` onto the alpha-fiber over `q`.
    pub fn project_alpha(&self, q: &Point, h: &Point) -> Result<Point> {
        let a = self.alpha.clone();
        newton_project(move |x| a(x), q, h, self.newton())
    }

    pub fn project_beta(&self, q: &Point, g: &Point) -> Result<Point> {
        let b = self.beta.clone();
        newton_project(move |x| b(x), q, g, self.newton())
    }

    pub fn alpha_jacobian(&self, g: &Point) -> DMatrix<f64> {
        jacobian(|x| self.alpha(x), g, self.fd_step)
    }

    pub fn beta_jacobian(&self, g: &Point) -> DMatrix<f64> {
        jacobian(|x| self.beta(x), g, self.fd_step)
    }

    pub fn eps_jacobian(&self, u: &Point) -> DMatrix<f64> {
        jacobian(|x| self.eps(x), u, self.fd_step)
    }

    /// Pivot-normalized basis of `ker T_g alpha` (or beta).
    pub fn vertical_basis(&self, side: FiberSide, g: &Point) -> Result<DMatrix<f64>> {
        let j = match side {
            FiberSide::Alpha => self.alpha_jacobian(g),
            FiberSide::Beta => self.beta_jacobian(g),
        };
        let dep = pivot_columns(&j, self.dim_m)?;
        normalized_kernel(&j, &dep)
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        DVector::from_fn(self.dim_g, |i, _| {
            self.sample_center[i] + self.sample_radius * rng.random_range(-1.0..1.0)
        })
    }

    pub fn sample_base<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let g = self.sample_point(rng);
        self.alpha(&g)
    }

    /// A random point of the alpha-fiber over `q`.
    pub fn sample_alpha_fiber<R: Rng + ?Sized>(&self, q: &Point, rng: &mut R) -> Result<Point> {
        let e = self.eps(q);
        if let Some(ch) = &self.alpha_chart {
            let xi0 = (ch.to_fiber)(&e);
            let xi = DVector::from_fn(ch.fiber_dim, |i, _| {
                xi0[i] + self.sample_radius * rng.random_range(-1.0..1.0)
            });
            return Ok((ch.to_g)(q, &xi));
        }
        let mut last = None;
        for _ in 0..20 {
            let guess = DVector::from_fn(self.dim_g, |i, _| {
                e[i] + self.sample_radius * rng.random_range(-1.0..1.0)
            });
            match self.project_alpha(q, &guess) {
                Ok(h) => return Ok(h),
                Err(err) => last = Some(err),
            }
        }
        Err(Error::SamplerExhausted(format!(
            "no alpha-fiber point found after 20 attempts ({})",
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    /// A random composable pair.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Point, Point)> {
        let g = self.sample_point(rng);
        let h = self.sample_alpha_fiber(&self.beta(&g), rng)?;
        Ok((g, h))
    }

    /// A random composable triple.
    pub fn sample_triple<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Point, Point, Point)> {
        let (g, h) = self.sample_pair(rng)?;
        let k = self.sample_alpha_fiber(&self.beta(&h), rng)?;
        Ok((g, h, k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberSide {
    Alpha,
    Beta,
}

/// Residuals of the quasiloopoid and loopoid axioms on samples.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub samples: usize,
    pub section_residual: f64,
    pub unit_residual: f64,
    pub alpha_rank_min: usize,
    pub beta_rank_min: usize,
    pub submersions: bool,
    pub unities_assoc_residual: f64,
    pub anchor_alpha_residual: f64,
    pub anchor_beta_residual: f64,
    pub left_translation_sigma_min: f64,
    pub right_translation_sigma_min: f64,
    pub left_ip_residual: Option<f64>,
    pub right_ip_residual: Option<f64>,
    pub ip_identities_residual: Option<f64>,
    pub quasiloopoid: bool,
    pub loopoid: bool,
    pub inverse_property: bool,
    pub global_injectivity_checked: bool,
}

const AXIOM_TOL: f64 = 1e-8;

/// Sampled check of the unit laws, submersion ranks, unities associativity,
/// anchor morphism, fiber translations and (when an inverse is present)
/// the inverse property.
pub fn check_axioms<R: Rng + ?Sized>(
    q: &ChartedQuasiloopoid,
    n_samples: usize,
    rng: &mut R,
) -> Result<AxiomReport> {
    let mut section = 0.0f64;
    let mut unit = 0.0f64;
    let mut arank = usize::MAX;
    let mut brank = usize::MAX;
    let mut ua = 0.0f64;
    let mut anc_a = 0.0f64;
    let mut anc_b = 0.0f64;
    let mut lsig = f64::INFINITY;
    let mut rsig = f64::INFINITY;
    let mut lip: Option<f64> = None;
    let mut rip: Option<f64> = None;
    let mut ipid: Option<f64> = None;
    let m = |a: &Point, b: &Point| (q.mul)(a, b);
    let mx = |acc: &mut Option<f64>, v: f64| {
        *acc = Some(acc.unwrap_or(0.0).max(if v.is_nan() { f64::INFINITY } else { v }))
    };

    for _ in 0..n_samples {
        let (g, h, k) = q.sample_triple(rng)?;
        let u = q.alpha(&g);
        let eu = q.eps(&u);
        section = section
            .max((q.alpha(&eu) - &u).norm())
            .max((q.beta(&eu) - &u).norm());

        let eb = q.eps(&q.beta(&g));
        let ea = q.eps(&q.alpha(&g));
        unit = unit
            .max((m(&g, &eb) - &g).norm())
            .max((m(&ea, &g) - &g).norm());

        arank = arank.min(rank(&q.alpha_jacobian(&g), 1e-9));
        brank = brank.min(rank(&q.beta_jacobian(&g), 1e-9));

        let gh = m(&g, &h);
        anc_a = anc_a.max((q.alpha(&gh) - q.alpha(&g)).norm());
        anc_b = anc_b.max((q.beta(&gh) - q.beta(&h)).norm());

        // (xy)z = x(yz) with one factor a unit; an undefined side counts
        // with its composability gap
        let assoc = |x: &Point, y: &Point, z: &Point| -> f64 {
            let xy = m(x, y);
            let yz = m(y, z);
            let gap = q.gap(&xy, z).max(q.gap(x, &yz));
            if gap > q.composable_tol {
                return gap;
            }
            (m(&xy, z) - m(x, &yz)).norm()
        };
        let ehk = q.eps(&q.beta(&h));
        ua = ua
            .max(assoc(&ea, &g, &h))
            .max(assoc(&g, &eb, &h))
            .max(assoc(&g, &h, &ehk));
        let _ = &k;

        // translations restricted to fibers
        if q.rank() > 0 {
            let va = q.vertical_basis(FiberSide::Alpha, &h)?;
            let jl = jacobian(|y| m(&g, y), &h, q.fd_step) * &va;
            lsig = lsig.min(sigma_min(&jl));
            let vb = q.vertical_basis(FiberSide::Beta, &g)?;
            let jr = jacobian(|x| m(x, &h), &g, q.fd_step) * &vb;
            rsig = rsig.min(sigma_min(&jr));
        }

        if let Some((inv, kind)) = &q.inverse {
            let gi = inv(&g);
            // g^{-1}(gh) = h
            let gap = q.gap(&gi, &gh);
            let v = if gap > q.composable_tol {
                gap
            } else {
                (m(&gi, &gh) - &h).norm()
            };
            mx(&mut lip, v);
            if *kind == InverseKind::TwoSided {
                // (h' g) g^{-1} = h' with h' in the beta-fiber over alpha(g)
                let hp = q.project_beta(&u, &(&h - q.eps(&q.alpha(&h)) + &ea))?;
                let hg = m(&hp, &g);
                let gap = q.gap(&hg, &gi);
                let v = if gap > q.composable_tol {
                    gap
                } else {
                    (m(&hg, &gi) - &hp).norm()
                };
                mx(&mut rip, v);
                let ghi = inv(&gh);
                let hi = inv(&h);
                let id = (m(&g, &gi) - &ea)
                    .norm()
                    .max((m(&gi, &g) - &eb).norm())
                    .max((inv(&gi) - &g).norm())
                    .max((ghi - m(&hi, &gi)).norm());
                mx(&mut ipid, id);
            }
        }
    }
    if n_samples == 0 {
        arank = 0;
        brank = 0;
    }
    let submersions = arank == q.dim_m && brank == q.dim_m;
    let quasiloopoid = section < AXIOM_TOL
        && unit < AXIOM_TOL
        && submersions
        && (q.rank() == 0 || (lsig > AXIOM_TOL && rsig > AXIOM_TOL));
    let loopoid = quasiloopoid
        && ua < AXIOM_TOL
        && anc_a < AXIOM_TOL
        && anc_b < AXIOM_TOL;
    let inverse_property = matches!(
        (lip, rip, ipid),
        (Some(a), Some(b), Some(c)) if a < AXIOM_TOL && b < AXIOM_TOL && c < AXIOM_TOL
    );
    Ok(AxiomReport {
        samples: n_samples,
        section_residual: section,
        unit_residual: unit,
        alpha_rank_min: arank,
        beta_rank_min: brank,
        submersions,
        unities_assoc_residual: ua,
        anchor_alpha_residual: anc_a,
        anchor_beta_residual: anc_b,
        left_translation_sigma_min: if q.rank() == 0 { 1.0 } else { lsig },
        right_translation_sigma_min: if q.rank() == 0 { 1.0 } else { rsig },
        left_ip_residual: lip,
        right_ip_residual: rip,
        ip_identities_residual: ipid,
        quasiloopoid,
        loopoid,
        inverse_property,
        global_injectivity_checked: false,
    })
}

/// `G = L x R^n x R^n` with `(x,s,t)(y,t,r) = (x.y, s, r)`, source `s` and
/// target `t`. Inherits an inverse `(x^{-1}, t, s)` when `L` has one.
pub fn product_loopoid(l: &SmoothLoopChart, n: usize) -> ChartedQuasiloopoid {
    let d = l.dim;
    let lm = l.mul_map();
    let e = l.unit.clone();
    let part = move |g: &Point, a: usize, len: usize| g.rows(a, len).into_owned();
    let mul: BinMap = Arc::new(move |g: &Point, h: &Point| {
        let xy = lm(&part(g, 0, d), &part(h, 0, d));
        let mut out = DVector::zeros(d + 2 * n);
        out.rows_mut(0, d).copy_from(&xy);
        out.rows_mut(d, n).copy_from(&g.rows(d, n));
        out.rows_mut(d + n, n).copy_from(&h.rows(d + n, n));
        out
    });
    let e2 = e.clone();
    let unit_embed: VecMap = Arc::new(move |u: &Point| {
        let mut out = DVector::zeros(d + 2 * n);
        out.rows_mut(0, d).copy_from(&e2);
        out.rows_mut(d, n).copy_from(u);
        out.rows_mut(d + n, n).copy_from(u);
        out
    });
    let inverse = l.inverse_map().map(|inv| {
        let f: VecMap = Arc::new(move |g: &Point| {
            let mut out = DVector::zeros(d + 2 * n);
            out.rows_mut(0, d).copy_from(&inv(&g.rows(0, d).into_owned()));
            out.rows_mut(d, n).copy_from(&g.rows(d + n, n));
            out.rows_mut(d + n, n).copy_from(&g.rows(d, n));
            out
        });
        (f, InverseKind::TwoSided)
    });
    let alpha_chart = AlphaFiberChart {
        fiber_dim: d + n,
        to_g: Arc::new(move |s: &Point, xi: &Point| {
            let mut out = DVector::zeros(d + 2 * n);
            out.rows_mut(0, d).copy_from(&xi.rows(0, d));
            out.rows_mut(d, n).copy_from(s);
            out.rows_mut(d + n, n).copy_from(&xi.rows(d, n));
            out
        }),
        to_fiber: Arc::new(move |g: &Point| {
            let mut xi = DVector::zeros(d + n);
            xi.rows_mut(0, d).copy_from(&g.rows(0, d));
            xi.rows_mut(d, n).copy_from(&g.rows(d + n, n));
            xi
        }),
    };
    let mut center = DVector::zeros(d + 2 * n);
    center.rows_mut(0, d).copy_from(&e);
    ChartedQuasiloopoid {
        name: format!("product({}, {n})", l.name),
        dim_g: d + 2 * n,
        dim_m: n,
        alpha: Arc::new(move |g: &Point| g.rows(d, n).into_owned()),
        beta: Arc::new(move |g: &Point| g.rows(d + n, n).into_owned()),
        unit_embed,
        mul,
        composable_tol: 1e-9,
        claims_loopoid: true,
        inverse,
        alpha_chart: Some(alpha_chart),
        fd_step: l.fd_step,
        sample_center: center,
        sample_radius: 0.5,
    }
}

/// The pair groupoid `R^n x R^n`, `(s,t)(t,r) = (s,r)`.
pub fn pair_groupoid(n: usize) -> ChartedQuasiloopoid {
    let trivial = SmoothLoopChart::from_fn(0, "point", |_, _| DVector::zeros(0))
        .with_inverse(|_| DVector::zeros(0));
    let mut q = product_loopoid(&trivial, n);
    q.name = format!("pair({n})");
    q.fd_step = FD_STEP;
    q
}

/// The quasiloopoid `{(a1,b1,a2,b2) : a1 - a2 = phi(b1 - b2)}` stored as
/// `(a1, b1, b2)`. Source `(a1,b1)`, target `(a2,b2)`, product
/// `(a1,b1,b2)(a2,b2,b3) = (a1,b1,b3)` and left inverse `(a2,b2,b1)`.
pub fn phi_quasiloopoid(phi: ScalarFn) -> Result<ChartedQuasiloopoid> {
    let one = |x: f64| DVector::from_element(1, x);
    for i in 1..=40 {
        let x = 0.1 * i as f64;
        let (p, n) = (phi.eval(&one(x)), phi.eval(&one(-x)));
        if (p + n).abs() > 1e-12 * p.abs().max(1.0) {
            return Err(Error::NotOdd(format!("phi({x}) = {p} but phi(-{x}) = {n}")));
        }
    }
    let d0 = phi.gradient(&one(0.0))[0];
    for i in -40..=40 {
        let x = 0.1 * i as f64;
        let d = phi.gradient(&one(x))[0];
        if d == 0.0 || d.signum() != d0.signum() || d0 == 0.0 {
            return Err(Error::NotMonotone(format!("phi'({x}) = {d}, phi'(0) = {d0}")));
        }
    }
    let ph = phi.clone();
    let a2 = move |g: &Point| g[0] - ph.eval(&DVector::from_element(1, g[1] - g[2]));
    let a2b = a2.clone();
    let a2i = a2.clone();
    Ok(ChartedQuasiloopoid {
        name: "phi".into(),
        dim_g: 3,
        dim_m: 2,
        alpha: Arc::new(|g: &Point| DVector::from_vec(vec![g[0], g[1]])),
        beta: Arc::new(move |g: &Point| DVector::from_vec(vec![a2b(g), g[2]])),
        unit_embed: Arc::new(|u: &Point| DVector::from_vec(vec![u[0], u[1], u[1]])),
        mul: Arc::new(|g: &Point, h: &Point| DVector::from_vec(vec![g[0], g[1], h[2]])),
        composable_tol: 1e-9,
        claims_loopoid: false,
        inverse: Some((
            Arc::new(move |g: &Point| DVector::from_vec(vec![a2i(g), g[2], g[1]])),
            InverseKind::LeftOnly,
        )),
        alpha_chart: Some(AlphaFiberChart {
            fiber_dim: 1,
            to_g: Arc::new(|q: &Point, xi: &Point| DVector::from_vec(vec![q[0], q[1], xi[0]])),
            to_fiber: Arc::new(|g: &Point| DVector::from_element(1, g[2])),
        }),
        fd_step: FD_STEP,
        sample_center: DVector::zeros(3),
        sample_radius: 0.5,
    })
}

/// A fibration `pi: R^dim_p -> R^dim_m` with global trivialization
/// `p <-> (pi(p), f(p))`.
#[derive(Clone)]
pub struct FibrationChart {
    pub dim_p: usize,
    pub dim_m: usize,
    pub pi: VecMap,
    pub fiber: VecMap,
    pub lift: BinMap,
    /// Partial Jacobians `(d lift / d m, d lift / d f)` at `(m, f)`.
    pub lift_jacobian: Arc<dyn Fn(&Point, &Point) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync>,
}

impl fmt::Debug for FibrationChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FibrationChart({} -> {})", self.dim_p, self.dim_m)
    }
}

impl FibrationChart {
    pub fn fiber_dim(&self) -> usize {
        self.dim_p - self.dim_m
    }

    pub fn identity(m: usize) -> Self {
        Self::sheared(m, Vec::new(), 0).expect("identity fibration is valid")
    }

    /// `pi(p) = p[..m] + T(p[m..])`, `f(p) = p[m..]`, with `T` polynomial in
    /// the `k` fiber coordinates.
    pub fn sheared(m: usize, shear: Vec<Polynomial>, k: usize) -> Result<Self> {
        if !shear.is_empty() && shear.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "shear has {} components for base dimension {m}",
                shear.len()
            )));
        }
        for p in &shear {
            p.check_arity(k)?;
        }
        let shear = Arc::new(shear);
        let dshear = shear.clone();
        let t = move |f: &[f64]| -> Point {
            DVector::from_fn(m, |i, _| shear.get(i).map_or(0.0, |p| p.eval(f)))
        };
        let t1 = t.clone();
        Ok(Self {
            dim_p: m + k,
            dim_m: m,
            pi: Arc::new(move |p: &Point| {
                p.rows(0, m).into_owned() + t1(&p.as_slice()[m..])
            }),
            fiber: Arc::new(move |p: &Point| p.rows(m, k).into_owned()),
            lift: Arc::new(move |b: &Point, f: &Point| {
                let mut p = DVector::zeros(m + k);
                p.rows_mut(0, m).copy_from(&(b - t(f.as_slice())));
                p.rows_mut(m, k).copy_from(f);
                p
            }),
            lift_jacobian: Arc::new(move |_: &Point, f: &Point| {
                let mut dm = DMatrix::zeros(m + k, m);
                dm.view_mut((0, 0), (m, m)).fill_with_identity();
                let mut df = DMatrix::zeros(m + k, k);
                for (i, p) in dshear.iter().enumerate() {
                    let g = p.gradient(f.as_slice());
                    for a in 0..k {
                        df[(i, a)] = -g[a];
                    }
                }
                df.view_mut((m, 0), (k, k)).fill_with_identity();
                (dm, df)
            }),
        })
    }

    pub fn check_submersion<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<()> {
        for _ in 0..samples {
            let p = DVector::from_fn(self.dim_p, |_, _| rng.random_range(-1.0..1.0));
            let j = jacobian(|x| (self.pi)(x), &p, FD_STEP);
            let r = rank(&j, 1e-9);
            if r != self.dim_m {
                return Err(Error::NotSubmersion(format!(
                    "rank {r} of T pi at {:?}, expected {}",
                    p.as_slice(),
                    self.dim_m
                )));
            }
        }
        Ok(())
    }
}

/// Prolongation of `q` over `pi: P -> M`, the carrier
/// `{(p, g, p') : pi(p) = alpha(g), beta(g) = pi(p')}` in coordinates
/// `(p, xi, f')`: `g` is read from the alpha-fiber chart at `pi(p)` and
/// `p' = lift(beta(g), f')`.
pub fn prolongation_loopoid(
    q: &ChartedQuasiloopoid,
    pi: &FibrationChart,
) -> Result<ChartedQuasiloopoid> {
    if pi.dim_m != q.dim_m {
        return Err(Error::DimensionMismatch(format!(
            "fibration base has dimension {}, loopoid base {}",
            pi.dim_m, q.dim_m
        )));
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x5eed);
    pi.check_submersion(16, &mut rng)?;
    let ch = q.alpha_chart.clone().ok_or_else(|| {
        Error::Unsupported(format!("{} has no alpha-fiber chart", q.name))
    })?;
    let (dp, r, k) = (pi.dim_p, ch.fiber_dim, pi.fiber_dim());
    let dim = dp + r + k;

    #[derive(Clone)]
    struct Parts {
        dp: usize,
        r: usize,
        k: usize,
        pi: FibrationChart,
        ch: AlphaFiberChart,
        beta: VecMap,
    }
    impl Parts {
        fn p(&self, x: &Point) -> Point {
            x.rows(0, self.dp).into_owned()
        }
        fn g(&self, x: &Point) -> Point {
            (self.ch.to_g)(&(self.pi.pi)(&self.p(x)), &x.rows(self.dp, self.r).into_owned())
        }
        fn target(&self, x: &Point) -> Point {
            let g = self.g(x);
            (self.pi.lift)(&(self.beta)(&g), &x.rows(self.dp + self.r, self.k).into_owned())
        }
        fn pack(&self, p: &Point, g: &Point, f: &Point) -> Point {
            let mut out = DVector::zeros(self.dp + self.r + self.k);
            out.rows_mut(0, self.dp).copy_from(p);
            out.rows_mut(self.dp, self.r).copy_from(&(self.ch.to_fiber)(g));
            out.rows_mut(self.dp + self.r, self.k).copy_from(f);
            out
        }
    }
    let parts = Parts {
        dp,
        r,
        k,
        pi: pi.clone(),
        ch,
        beta: q.beta.clone(),
    };

    let p1 = parts.clone();
    let p2 = parts.clone();
    let p3 = parts.clone();
    let qe = q.unit_embed.clone();
    let qm = q.mul.clone();
    let inverse = q.inverse.clone().map(|(inv, kind)| {
        let p4 = parts.clone();
        let f: VecMap = Arc::new(move |x: &Point| {
            let p = p4.p(x);
            let g = p4.g(x);
            let pt = p4.target(x);
            p4.pack(&pt, &inv(&g), &(p4.pi.fiber)(&p))
        });
        (f, kind)
    });
    let mut center = DVector::zeros(dim);
    if let Some(c) = q.alpha_chart.as_ref().map(|c| (c.to_fiber)(&q.eps(&DVector::zeros(q.dim_m)))) {
        center.rows_mut(dp, r).copy_from(&c);
    }
    Ok(ChartedQuasiloopoid {
        name: format!("prolongation({})", q.name),
        dim_g: dim,
        dim_m: dp,
        alpha: Arc::new(move |x: &Point| x.rows(0, dp).into_owned()),
        beta: Arc::new(move |x: &Point| p1.target(x)),
        unit_embed: Arc::new(move |p: &Point| {
            let g = qe(&(p2.pi.pi)(p));
            p2.pack(p, &g, &(p2.pi.fiber)(p))
        }),
        mul: Arc::new(move |x: &Point, y: &Point| {
            let gh = qm(&p3.g(x), &p3.g(y));
            let f2 = y.rows(p3.dp + p3.r, p3.k).into_owned();
            p3.pack(&p3.p(x), &gh, &f2)
        }),
        composable_tol: q.composable_tol,
        claims_loopoid: true,
        inverse,
        alpha_chart: Some(AlphaFiberChart {
            fiber_dim: r + k,
            to_g: Arc::new(move |p: &Point, xi: &Point| {
                let mut out = DVector::zeros(dp + r + k);
                out.rows_mut(0, dp).copy_from(p);
                out.rows_mut(dp, r + k).copy_from(xi);
                out
            }),
            to_fiber: Arc::new(move |x: &Point| x.rows(dp, r + k).into_owned()),
        }),
        fd_step: q.fd_step,
        sample_center: center,
        sample_radius: q.sample_radius,
    })
}

/// A local section of `alpha` or `beta` through a chosen point, built by
/// Newton projection from a pseudoinverse predictor.
#[derive(Clone)]
pub struct LocalSection {
    pub side: FiberSide,
    pub base: Point,
    pub through: Point,
    pub radius: f64,
    predictor: DMatrix<f64>,
    map: VecMap,
    cfg: NewtonConfig,
}

impl fmt::Debug for LocalSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalSection")
            .field("side", &self.side)
            .field("base", &self.base.as_slice())
            .field("through", &self.through.as_slice())
            .field("radius", &self.radius)
            .finish()
    }
}

impl LocalSection {
    /// `s(q')` with `side(s(q')) = q'` and `s(base) = through`.
    pub fn eval(&self, q: &Point) -> Result<Point> {
        let guess = &self.through + &self.predictor * (q - &self.base);
        let map = self.map.clone();
        newton_project_tight(move |x| map(x), q, &guess, self.cfg.fd_step)
            .map_err(|e| Error::SectionFailure(e.to_string()))
    }

    /// Replace the predictor, e.g. to build a second, different section
    /// through the same point.
    pub fn with_predictor(mut self, predictor: DMatrix<f64>) -> Self {
        self.predictor = predictor;
        self
    }
}

/// Pair of local sections through one point; `tau` is an alpha-section and
/// `sigma` a beta-section.
#[derive(Debug, Clone)]
pub struct LocalBisection {
    pub tau: LocalSection,
    pub sigma: LocalSection,
}

pub fn build_local_section(
    q: &ChartedQuasiloopoid,
    side: FiberSide,
    through: &Point,
) -> Result<LocalSection> {
    let (map, j) = match side {
        FiberSide::Alpha => (q.alpha.clone(), q.alpha_jacobian(through)),
        FiberSide::Beta => (q.beta.clone(), q.beta_jacobian(through)),
    };
    if rank(&j, 1e-9) != q.dim_m {
        return Err(Error::SectionFailure(format!(
            "{:?} has rank {} at the base point, expected {}",
            side,
            rank(&j, 1e-9),
            q.dim_m
        )));
    }
    let predictor = if j.nrows() == 0 {
        DMatrix::zeros(j.ncols(), 0)
    } else {
        j.clone()
            .pseudo_inverse(SVD_CUTOFF)
            .map_err(|e| Error::SectionFailure(e.to_string()))?
    };
    let base = map(through);
    let s = LocalSection {
        side,
        base,
        through: through.clone(),
        radius: 0.1,
        predictor,
        map,
        cfg: q.newton(),
    };
    // the section must at least be defined at the base point
    let at_base = s.eval(&s.base)?;
    if (at_base - through).norm() > 1e-9 {
        return Err(Error::SectionFailure("section misses the base point".into()));
    }
    Ok(s)
}

pub fn local_bisection(q: &ChartedQuasiloopoid, through: &Point) -> Result<LocalBisection> {
    Ok(LocalBisection {
        tau: build_local_section(q, FiberSide::Alpha, through)?,
        sigma: build_local_section(q, FiberSide::Beta, through)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IsotropyReport {
    pub base: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub dimension_estimate: usize,
    pub closure_residual: f64,
    pub inverse_residual: f64,
}

/// Sample the isotropy `alpha^{-1}(u) ∩ beta^{-1}(u)` and measure how far
/// products and inverses of samples leave it.
pub fn isotropy_samples<R: Rng + ?Sized>(
    q: &ChartedQuasiloopoid,
    u: &Point,
    n: usize,
    rng: &mut R,
) -> Result<IsotropyReport> {
    let (a, b) = (q.alpha.clone(), q.beta.clone());
    let both = move |x: &Point| {
        let (pa, pb) = (a(x), b(x));
        let mut v = DVector::zeros(pa.len() + pb.len());
        v.rows_mut(0, pa.len()).copy_from(&pa);
        v.rows_mut(pa.len(), pb.len()).copy_from(&pb);
        v
    };
    let mut target = DVector::zeros(2 * q.dim_m);
    target.rows_mut(0, q.dim_m).copy_from(u);
    target.rows_mut(q.dim_m, q.dim_m).copy_from(u);
    let e = q.eps(u);
    let mut pts = Vec::new();
    for _ in 0..n {
        let guess = DVector::from_fn(q.dim_g, |i, _| {
            e[i] + q.sample_radius * rng.random_range(-1.0..1.0)
        });
        if let Ok(g) = newton_project(&both, &target, &guess, q.newton()) {
            pts.push(g);
        }
    }
    if pts.is_empty() {
        return Err(Error::EmptyFiber(format!(
            "no isotropy point found over {:?}",
            u.as_slice()
        )));
    }
    let dev = |x: &Point| (both(x) - &target).norm();
    let mut closure = 0.0f64;
    let mut inv_res = 0.0f64;
    for (i, g) in pts.iter().enumerate() {
        let h = &pts[(i + 1) % pts.len()];
        closure = closure.max(dev(&(q.mul)(g, h)));
        if let Some((inv, _)) = &q.inverse {
            let gi = inv(g);
            inv_res = inv_res
                .max(dev(&gi))
                .max(((q.mul)(g, &gi) - &e).norm());
        }
    }
    let jab = jacobian(&both, &pts[0], q.fd_step);
    let dimension_estimate = q.dim_g - rank(&jab, 1e-9);
    Ok(IsotropyReport {
        base: u.iter().copied().collect(),
        samples: pts.iter().map(|p| p.iter().copied().collect()).collect(),
        dimension_estimate,
        closure_residual: closure,
        inverse_residual: inv_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cubic_phi() -> ScalarFn {
        ScalarFn::Poly(Polynomial::zero().term(1.0, &[3]).term(1.0, &[1]))
    }

    #[test]
    fn product_composability() {
        let q = product_loopoid(&SmoothLoopChart::planar_h(), 2);
        let g = dvector![0.1, 0.2, 1.0, 2.0, 3.0, 4.0];
        let h = dvector![0.3, 0.4, 3.0, 4.0, 5.0, 6.0];
        assert!(q.composable(&g, &h));
        let bad = dvector![0.3, 0.4, 3.5, 4.0, 5.0, 6.0];
        assert!(!q.composable(&g, &bad));
        assert!(matches!(q.multiply(&g, &bad), Err(Error::NotComposable(_))));
        let gh = q.multiply(&g, &h).unwrap();
        assert_eq!(gh.as_slice()[2..], [1.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn phi_product_matches_closed_form() {
        let q = phi_quasiloopoid(cubic_phi()).unwrap();
        let phi = |x: f64| x * x * x + x;
        let (a1, b1, b2, b3) = (0.3, 0.5, -0.2, 0.7);
        let g = dvector![a1, b1, b2];
        let a2 = a1 + phi(b2 - b1);
        let h = dvector![a2, b2, b3];
        let gh = q.multiply(&g, &h).unwrap();
        let t = q.beta(&gh);
        assert!((t[0] - (a1 + phi(b3 - b1))).abs() < 1e-15);
        assert_eq!(t[1], b3);
    }

    #[test]
    fn phi_validation() {
        let even = ScalarFn::Poly(Polynomial::zero().term(1.0, &[2]).term(1.0, &[1]));
        assert!(matches!(phi_quasiloopoid(even), Err(Error::NotOdd(_))));
        let flat = ScalarFn::Poly(Polynomial::zero().term(1.0, &[3]));
        assert!(matches!(phi_quasiloopoid(flat), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn pair_groupoid_axioms() {
        let q = pair_groupoid(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = check_axioms(&q, 20, &mut rng).unwrap();
        assert!(r.loopoid && r.inverse_property);
        assert!(r.unit_residual < 1e-12 && r.unities_assoc_residual < 1e-12);
    }

    #[test]
    fn beta_section_of_product() {
        let q = product_loopoid(&SmoothLoopChart::planar_h(), 2);
        let g = dvector![0.1, 0.2, 1.0, 2.0, 3.0, 4.0];
        let s = build_local_section(&q, FiberSide::Beta, &g).unwrap();
        let v = s.eval(&dvector![3.05, 3.9]).unwrap();
        assert!((v - dvector![0.1, 0.2, 1.0, 2.0, 3.05, 3.9]).amax() < 1e-12);
    }

    #[test]
    fn identity_prolongation_matches_base() {
        let q = product_loopoid(&SmoothLoopChart::planar_h(), 1);
        let p = prolongation_loopoid(&q, &FibrationChart::identity(1)).unwrap();
        assert_eq!(p.dim_g, q.dim_g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(check_axioms(&p, 10, &mut rng).unwrap().loopoid);
    }
}
