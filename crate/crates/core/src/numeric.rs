//! Finite differences, pseudoinverse Newton projection and pivoted null spaces.
//!
//! Everything in the charted layer is built from these primitives: maps are
//! plain closures on `DVector<f64>`, derivatives are central differences and
//! fibers are reached by minimum-norm Newton corrections.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Point = DVector<f64>;
pub type VecMap = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type BinMap = Arc<dyn Fn(&Point, &Point) -> Point + Send + Sync>;
pub type ScalarMap = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Default relative finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Singular values below `SVD_CUTOFF * sigma_max` are treated as zero.
pub const SVD_CUTOFF: f64 = 1e-10;

pub fn step_for(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference Jacobian, one column per input coordinate.
pub fn jacobian<F>(f: F, x: &Point, rel: f64) -> DMatrix<f64>
where
    F: Fn(&Point) -> Point,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut rows = if n == 0 { f(x).len() } else { 0 };
    for j in 0..n {
        let h = step_for(x[j], rel);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        rows = col.len();
        cols.push(col);
    }
    let mut jac = DMatrix::zeros(rows, n);
    for (j, col) in cols.into_iter().enumerate() {
        jac.set_column(j, &col);
    }
    jac
}

/// Richardson-extrapolated central differences, `(4 D(h/2) - D(h)) / 3`:
/// truncation error O(h^4), so a wider step can be used on noisy `f`.
pub fn jacobian_extrapolated<F>(f: F, x: &Point, rel: f64) -> DMatrix<f64>
where
    F: Fn(&Point) -> Point,
{
    let coarse = jacobian(&f, x, rel);
    let fine = jacobian(&f, x, rel / 2.0);
    (fine * 4.0 - coarse) / 3.0
}

/// Central-difference derivative of `f` at `x` along `v`, i.e. `Df(x) v`.
///
/// The step is chosen so the displacement has length `rel * max(1, |x|)`.
pub fn directional<F>(f: F, x: &Point, v: &Point, rel: f64) -> Point
where
    F: Fn(&Point) -> Point,
{
    let vn = v.norm();
    if vn == 0.0 {
        return DVector::zeros(f(x).len());
    }
    let h = rel * x.norm().max(1.0) / vn;
    (f(&(x + v * h)) - f(&(x - v * h))) / (2.0 * h)
}

pub fn directional_scalar<F>(f: F, x: &Point, v: &Point, rel: f64) -> f64
where
    F: Fn(&Point) -> f64,
{
    let vn = v.norm();
    if vn == 0.0 {
        return 0.0;
    }
    let h = rel * x.norm().max(1.0) / vn;
    (f(&(x + v * h)) - f(&(x - v * h))) / (2.0 * h)
}

pub fn gradient<F>(f: F, x: &Point, rel: f64) -> Point
where
    F: Fn(&Point) -> f64,
{
    let mut g = DVector::zeros(x.len());
    for j in 0..x.len() {
        let h = step_for(x[j], rel);
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        g[j] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Lie bracket `[a, b](x) = Db(x) a(x) - Da(x) b(x)` of two vector fields.
pub fn field_bracket<A, B>(a: A, b: B, x: &Point, rel: f64) -> Point
where
    A: Fn(&Point) -> Point,
    B: Fn(&Point) -> Point,
{
    let ax = a(x);
    let bx = b(x);
    directional(&b, x, &ax, rel) - directional(&a, x, &bx, rel)
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    s.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    if s.is_empty() {
        return 1.0;
    }
    let max = s.max();
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank with relative cutoff against the largest singular value.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    if s.is_empty() {
        return 0;
    }
    let max = s.max();
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * max).count()
}

/// Minimum-norm least-squares solution of `a x = b` with truncated SVD.
pub fn lstsq(a: &DMatrix<f64>, b: &Point) -> Point {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.max();
    let eps = (SVD_CUTOFF * max).max(f64::MIN_POSITIVE);
    svd.solve(b, eps)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Solve the square system `a x = b`, refusing numerically singular matrices.
pub fn solve_square(a: &DMatrix<f64>, b: &Point) -> Result<Point> {
    let cond = condition_number(a);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::SingularJacobian { condition: cond });
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::SingularJacobian { condition: cond })
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub fd_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-12,
            fd_step: FD_STEP,
        }
    }
}

/// Move `x0` onto the level set `f(x) = target` by minimum-norm Newton steps.
///
/// Used both for fiber projection (`f = alpha` or `beta`) and for local
/// sections. Returns `NoConvergence` if the residual stays above `tol`.
pub fn newton_project<F>(f: F, target: &Point, x0: &Point, cfg: NewtonConfig) -> Result<Point>
where
    F: Fn(&Point) -> Point,
{
    let mut x = x0.clone();
    let mut res = f(&x) - target;
    let mut rn = res.norm();
    for _ in 0..cfg.max_iter {
        if rn <= cfg.tol {
            return Ok(x);
        }
        let j = jacobian(&f, &x, cfg.fd_step);
        if rank(&j, SVD_CUTOFF) == 0 {
            return Err(Error::SingularJacobian {
                condition: f64::INFINITY,
            });
        }
        let dx = lstsq(&j, &res);
        x -= dx;
        res = f(&x) - target;
        rn = res.norm();
    }
    if rn <= cfg.tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: cfg.max_iter,
            residual: rn,
        })
    }
}

/// Newton projection onto a level set, iterated until the residual stops
/// improving so that nested finite differences see a smooth curve.
pub fn newton_project_tight<F>(f: F, target: &Point, x0: &Point, fd: f64) -> Result<Point>
where
    F: Fn(&Point) -> Point,
{
    let mut x = x0.clone();
    let mut res = f(&x) - target;
    let floor = 4.0 * f64::EPSILON * target.amax().max(1.0);
    for _ in 0..50 {
        if res.amax() <= floor {
            break;
        }
        let j = jacobian(&f, &x, fd);
        let step = lstsq(&j, &res);
        let nx = &x - step;
        let nres = f(&nx) - target;
        if nres.norm() >= res.norm() {
            break;
        }
        x = nx;
        res = nres;
    }
    let gap = res.norm();
    if gap > 1e-10 || !gap.is_finite() {
        return Err(Error::NotOnFiber(gap));
    }
    Ok(x)
}

/// Choose `k` well-conditioned columns of `j` by Gaussian elimination with
/// complete pivoting. Near-ties resolve to the lowest column index so the
/// choice is stable under finite-difference noise.
pub fn pivot_columns(j: &DMatrix<f64>, k: usize) -> Result<Vec<usize>> {
    let mut a = j.clone();
    let (m, n) = a.shape();
    if k > m.min(n) {
        return Err(Error::RankDeficient(format!(
            "need {k} pivots from a {m}x{n} matrix"
        )));
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut used_rows = vec![false; m];
    let mut used_cols = vec![false; n];
    let mut pivots = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = 0.0;
        for c in 0..n {
            if used_cols[c] {
                continue;
            }
            for r in 0..m {
                if !used_rows[r] {
                    best = f64::max(best, a[(r, c)].abs());
                }
            }
        }
        if best <= 1e-9 * scale {
            return Err(Error::RankDeficient(format!(
                "only {} independent columns, {} required",
                pivots.len(),
                k
            )));
        }
        // first (row, col) within 1e-6 of the best magnitude, column-major
        let mut choice = None;
        'outer: for c in 0..n {
            if used_cols[c] {
                continue;
            }
            for r in 0..m {
                if !used_rows[r] && a[(r, c)].abs() >= best * (1.0 - 1e-6) {
                    choice = Some((r, c));
                    break 'outer;
                }
            }
        }
        let (pr, pc) = choice.expect("pivot exists");
        used_rows[pr] = true;
        used_cols[pc] = true;
        pivots.push(pc);
        let pv = a[(pr, pc)];
        for r in 0..m {
            if r != pr {
                let f = a[(r, pc)] / pv;
                if f != 0.0 {
                    for c in 0..n {
                        a[(r, c)] -= f * a[(pr, c)];
                    }
                }
            }
        }
    }
    pivots.sort_unstable();
    Ok(pivots)
}

/// Basis of `ker j` normalized so that its rows outside `dependent` form the
/// identity. `dependent` must index an invertible square block of `j`.
pub fn normalized_kernel(j: &DMatrix<f64>, dependent: &[usize]) -> Result<DMatrix<f64>> {
    let (m, n) = j.shape();
    if dependent.len() != m {
        return Err(Error::RankDeficient(format!(
            "{} dependent columns for {} equations",
            dependent.len(),
            m
        )));
    }
    let free: Vec<usize> = (0..n).filter(|c| !dependent.contains(c)).collect();
    let r = free.len();
    let mut jd = DMatrix::zeros(m, m);
    for (a, &c) in dependent.iter().enumerate() {
        jd.set_column(a, &j.column(c));
    }
    let mut jf = DMatrix::zeros(m, r);
    for (a, &c) in free.iter().enumerate() {
        jf.set_column(a, &j.column(c));
    }
    let mut basis = DMatrix::zeros(n, r);
    if m > 0 {
        let cond = condition_number(&jd);
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::RankDeficient(format!(
                "dependent block condition {cond:e}"
            )));
        }
        let lu = jd.lu();
        let sol = lu
            .solve(&(-jf))
            .ok_or_else(|| Error::RankDeficient("dependent block singular".into()))?;
        for (a, &c) in dependent.iter().enumerate() {
            for col in 0..r {
                basis[(c, col)] = sol[(a, col)];
            }
        }
    }
    for (col, &c) in free.iter().enumerate() {
        basis[(c, col)] = 1.0;
    }
    Ok(basis)
}

pub fn max_abs(v: &Point) -> f64 {
    v.amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn central_jacobian_is_exact_on_quadratics() {
        let f = |x: &Point| dvector![x[0] * x[1], x[0] * x[0] + 3.0 * x[1]];
        let x = dvector![0.7, -1.3];
        let j = jacobian(f, &x, FD_STEP);
        let want = DMatrix::from_row_slice(2, 2, &[-1.3, 0.7, 1.4, 3.0]);
        assert!((j - want).amax() < 1e-9);
    }

    #[test]
    fn extrapolated_jacobian_of_quartic() {
        let f = |x: &Point| DVector::from_vec(vec![x[0].powi(4) + x[1]]);
        let j = jacobian_extrapolated(f, &DVector::from_vec(vec![0.7, 0.1]), 1e-2);
        assert!((j[(0, 0)] - 4.0 * 0.343).abs() < 1e-10);
        assert!((j[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn newton_projection_lands_on_circle() {
        let f = |x: &Point| dvector![x[0] * x[0] + x[1] * x[1]];
        let p = newton_project(f, &dvector![1.0], &dvector![0.9, 0.3], NewtonConfig::default())
            .unwrap();
        assert!((p.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_basis_is_pivot_normalized() {
        let j = DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let dep = pivot_columns(&j, 2).unwrap();
        assert_eq!(dep, vec![2, 3]);
        let b = normalized_kernel(&j, &dep).unwrap();
        assert_eq!(b.shape(), (4, 2));
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(b[(1, 1)], 1.0);
        assert!((&j * &b).amax() < 1e-15);
    }

    #[test]
    fn pivot_reports_rank_deficiency() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(pivot_columns(&j, 2), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn lstsq_gives_minimum_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = lstsq(&a, &dvector![2.0]);
        assert!((x - dvector![1.0, 1.0]).amax() < 1e-12);
    }

    #[test]
    fn bracket_of_coordinate_fields() {
        // [d/dx, x d/dy] = d/dy
        let a = |_: &Point| dvector![1.0, 0.0];
        let b = |p: &Point| dvector![0.0, p[0]];
        let v = field_bracket(a, b, &dvector![0.3, 0.2], 1e-4);
        assert!((v - dvector![0.0, 1.0]).amax() < 1e-9);
    }
}

/// Serialize a [`Point`] as a plain JSON array.
pub mod point_serde {
    use super::Point;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Point, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(p.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Point, D::Error> {
        Vec::<f64>::deserialize(d).map(Point::from_vec)
    }
}
