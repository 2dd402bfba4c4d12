//! One line per acceptance criterion. Lines marked `info` record printed
//! claims that the implementation cannot reproduce; they never fail the run.

use std::path::{Path, PathBuf};
use std::process::Command as Proc;
use std::time::Instant;

use loopoid_lab::algebroid::prolong_algebroid;
use loopoid_lab::cli_io::{execute, parse_spec, AlgebroidBody, Body, Command, Options, StructureSpec};
use loopoid_lab::finite::{classify, semidirect_loop, transversal_loop, CayleyTable, ClassifyConfig};
use loopoid_lab::lie_functor::{basis_section, check_almost_lie, LieFunctor};
use loopoid_lab::loopoid::{pair_groupoid, product_loopoid, ChartedQuasiloopoid, FiberSide};
use loopoid_lab::mechanics::{DiscreteLagrangianSystem, LegendreSide};
use loopoid_lab::numeric::Point;
use loopoid_lab::octonion::Octonion;
use loopoid_lab::smooth_loop::{bracket_loop_of, Side, SkewAlgebra, SmoothLoopChart};
use loopoid_lab::tangent::{check_tangent_loopoid, cotangent_fibration, tangent_multiply, CovectorElement, TangentElement};
use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Res<T> = Result<T, String>;

struct Line {
    id: &'static str,
    title: &'static str,
    asserted: bool,
    outcome: Res<String>,
}

fn specs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn load(name: &str) -> StructureSpec {
    let text = std::fs::read_to_string(specs_dir().join(name)).expect("spec file");
    parse_spec(&text).expect("valid spec")
}

fn loopoid(name: &str) -> ChartedQuasiloopoid {
    match load(name).body {
        Body::Loopoid(l) => l.build("$.body").expect("loopoid builds"),
        _ => panic!("{name} is not a loopoid spec"),
    }
}

fn system(name: &str) -> (loopoid_lab::cli_io::SystemSpec, DiscreteLagrangianSystem) {
    match load(name).body {
        Body::System(s) => {
            let sys = s.build().expect("system builds");
            (s, sys)
        }
        _ => panic!("{name} is not a system spec"),
    }
}

fn need(ok: bool, what: String) -> Res<()> {
    if ok {
        Ok(())
    } else {
        Err(what)
    }
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn basis_vec(n: usize, i: usize) -> Point {
    DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })
}

const PRINTED_OCTONION: [[&str; 8]; 8] = [
    ["e0", "e1", "e2", "e3", "e4", "e5", "e6", "e7"],
    ["e1", "-e0", "e3", "-e2", "e5", "-e4", "-e7", "e6"],
    ["e2", "-e3", "-e0", "e1", "e6", "e7", "-e4", "-e5"],
    ["e3", "e2", "-e1", "-e0", "e7", "-e6", "e5", "-e4"],
    ["e4", "-e5", "-e6", "-e7", "-e0", "e1", "e2", "e3"],
    ["e5", "e4", "-e7", "e6", "-e1", "-e0", "-e3", "e2"],
    ["e6", "e7", "e4", "-e5", "-e2", "e3", "-e0", "-e1"],
    ["e7", "-e6", "e5", "e4", "-e3", "-e2", "e1", "-e0"],
];

fn printed_entry(s: &str) -> Octonion {
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, s),
    };
    let k: usize = rest[1..].parse().unwrap();
    Octonion::basis(k).scale(sign)
}

fn random_octonion(rng: &mut ChaCha8Rng) -> Octonion {
    Octonion(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

fn octonion_suite() -> Res<String> {
    let t0 = Instant::now();
    let mut mismatches = 0;
    for i in 0..8 {
        for j in 0..8 {
            if Octonion::basis(i) * Octonion::basis(j) != printed_entry(PRINTED_OCTONION[i][j]) {
                mismatches += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut norm_err = 0.0f64;
    for _ in 0..10_000 {
        let (g, h) = (random_octonion(&mut rng), random_octonion(&mut rng));
        norm_err = norm_err.max(((g * h).norm() - g.norm() * h.norm()).abs() / (g.norm() * h.norm()));
    }
    let mut mou = 0.0f64;
    for _ in 0..1000 {
        let mut unit = || {
            let g = random_octonion(&mut rng);
            g.scale(1.0 / g.norm())
        };
        let (x, y, z) = (unit(), unit(), unit());
        mou = mou
            .max((z * (x * (z * y)) - ((z * x) * z) * y).max_abs())
            .max((x * (z * (y * z)) - ((x * z) * y) * z).max_abs())
            .max(((z * x) * (y * z) - (z * (x * y)) * z).max_abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "table mismatches {mismatches}/64, norm rel err {norm_err:.2e}, Moufang {mou:.2e}, {secs:.3}s"
    );
    need(mismatches == 0 && norm_err < 1e-12 && mou < 1e-9 && secs < 1.0, detail.clone())?;
    Ok(detail)
}

fn structure_constants() -> Res<String> {
    let t0 = Instant::now();
    let (_, s) = SmoothLoopChart::planar_h().extract_structure_constants().map_err(e)?;
    let mut want = vec![0.0; 8];
    // [X1, X2] = X1 - X2
    want[1] = 1.0;
    want[2] = -1.0;
    want[5] = -1.0;
    want[6] = 1.0;
    let h_err = s.constants().iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut trip = 0.0f64;
    for n in 0..100 {
        let dim = 2 + n % 4;
        let mut c = vec![0.0; dim * dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let v = rng.random_range(-2.0..2.0);
                    c[(k * dim + i) * dim + j] = v;
                    c[(k * dim + j) * dim + i] = -v;
                }
            }
        }
        let alg = SkewAlgebra::new(dim, c).map_err(e)?;
        let (_, back) = bracket_loop_of(alg.clone()).extract_structure_constants().map_err(e)?;
        trip = trip.max(back.max_abs_diff(&alg));
    }
    // the CLI table carries s^1_12 = 1 and s^2_12 = -1
    let rep = execute(Command::LoopAlgebra, &load("planar_h_product.json"), 0, &Options::default()).map_err(e)?;
    let table = rep.table.ok_or("loop-algebra produced no table")?;
    let cell = |k: &str, i: &str, j: &str| -> f64 {
        table
            .rows
            .iter()
            .find(|r| r[0] == k && r[1] == i && r[2] == j)
            .map(|r| r[3].parse().unwrap())
            .unwrap_or(f64::NAN)
    };
    let csv_err = (cell("1", "1", "2") - 1.0).abs().max((cell("2", "1", "2") + 1.0).abs());
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "H bracket err {h_err:.2e}, CSV err {csv_err:.2e}, round trip {trip:.2e} over 100 tensors, {secs:.3}s"
    );
    need(h_err < 1e-6 && csv_err < 1e-6 && trip < 1e-6 && secs < 5.0, detail.clone())?;
    Ok(detail)
}

/// Printed left prolongations, and right prolongations with `->X3 = -d/dx3`,
/// `->X4 = -d/dx4` (the class of d/dx5 in TG|M / TM is that of -d/dx3).
fn h_prolongations(g: &Point) -> (Vec<Point>, Vec<Point>) {
    let (x1, x2) = (g[0], g[1]);
    let v = |c: [f64; 6]| DVector::from_row_slice(&c);
    let left = vec![
        v([1.0, x2, 0.0, 0.0, 0.0, 0.0]),
        v([x1, 1.0, 0.0, 0.0, 0.0, 0.0]),
        v([0.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        v([0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
    ];
    let right = vec![
        v([1.0 + x2, 0.0, 0.0, 0.0, 0.0, 0.0]),
        v([0.0, 1.0 + x1, 0.0, 0.0, 0.0, 0.0]),
        v([0.0, 0.0, -1.0, 0.0, 0.0, 0.0]),
        v([0.0, 0.0, 0.0, -1.0, 0.0, 0.0]),
    ];
    (left, right)
}

fn lie_functor_h() -> Res<String> {
    let q = product_loopoid(&SmoothLoopChart::planar_h(), 2);
    let lf = LieFunctor::new(&q, &DVector::zeros(2)).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut lerr, mut rerr) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let g = q.sample_point(&mut rng);
        let (left, right) = h_prolongations(&g);
        for i in 0..4 {
            let x = basis_section(4, i);
            lerr = lerr.max((lf.prolong(Side::Left, &x, &g).map_err(e)? - &left[i]).amax());
            rerr = rerr.max((lf.prolong(Side::Right, &x, &g).map_err(e)? - &right[i]).amax());
        }
    }
    let mut berr = 0.0f64;
    for _ in 0..5 {
        let u = q.sample_base(&mut rng);
        let lc = lf.bracket_constants(Side::Left, &u).map_err(e)?;
        let rc = lf.bracket_constants(Side::Right, &u).map_err(e)?;
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let idx = (k * 4 + i) * 4 + j;
                    let want = match (k, i, j) {
                        (0, 0, 1) | (1, 1, 0) => 1.0,
                        (0, 1, 0) | (1, 0, 1) => -1.0,
                        _ => 0.0,
                    };
                    berr = berr.max((lc[idx] - want).abs()).max((rc[idx] + want).abs());
                }
            }
        }
    }
    let detail = format!(
        "left prolongations {lerr:.2e}, right prolongations {rerr:.2e} at 100 points, brackets {berr:.2e}"
    );
    need(lerr < 1e-7 && rerr < 1e-7 && berr < 1e-6, detail.clone())?;
    Ok(detail)
}

fn sign_theorem() -> Res<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut parts = Vec::new();
    let mut ok = true;
    let cases = [
        ("octonion product", product_loopoid(&SmoothLoopChart::octonion(), 2)),
        ("Heisenberg prolongation", loopoid("heisenberg_prolongation.json")),
        ("pair prolongation", loopoid("pair_prolongation.json")),
    ];
    for (name, q) in cases {
        if !q.claims_ip() {
            return Err(format!("{name} carries no inverse"));
        }
        let (mut sign, mut exchange) = (0.0f64, 0.0f64);
        for _ in 0..3 {
            let u = q.sample_base(&mut rng);
            let lf = LieFunctor::new(&q, &u).map_err(e)?;
            sign = sign.max(lf.sign_residual(&u).map_err(e)?);
            exchange = exchange.max(lf.inverse_exchange_residual(&u).map_err(e)?);
        }
        ok &= sign < 1e-6 && exchange < 1e-7;
        parts.push(format!("{name}: sign {sign:.2e}, T iota {exchange:.2e}"));
    }
    let detail = parts.join("; ");
    need(ok, detail.clone())?;
    Ok(detail)
}

fn random_poly(rng: &mut ChaCha8Rng, vars: usize) -> serde_json::Value {
    let mut terms = Vec::new();
    for total in 0..=2u32 {
        for v in 0..vars {
            if total == 0 && v > 0 {
                break;
            }
            let mut e = vec![0u32; vars];
            e[v] = total;
            terms.push(json!({"c": rng.random_range(-1.0..1.0), "e": e}));
        }
    }
    json!({ "terms": terms })
}

/// Rank 3 over R^2: brackets valued in span(e1, e2), anchor only on e3.
/// The anchor is a bracket morphism by construction; Jacobi generically fails.
fn seeded_non_jacobi(seed: u64) -> AlgebroidBody {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = json!({"terms": []});
    let mut c = vec![vec![vec![zero.clone(); 3]; 3]; 3];
    for i in 0..3 {
        for j in (i + 1)..3 {
            for k in 0..2 {
                let p = random_poly(&mut rng, 2);
                let neg: Vec<_> = p["terms"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|t| json!({"c": -t["c"].as_f64().unwrap(), "e": t["e"]}))
                    .collect();
                c[k][i][j] = p;
                c[k][j][i] = json!({ "terms": neg });
            }
        }
    }
    let rho = vec![
        vec![zero.clone(), zero.clone(), random_poly(&mut rng, 2)],
        vec![zero.clone(), zero.clone(), random_poly(&mut rng, 2)],
    ];
    let shear = vec![random_poly(&mut rng, 1), random_poly(&mut rng, 1)];
    serde_json::from_value(json!({
        "base_dim": 2, "rank": 3, "c": c, "rho": rho,
        "fibration": {"base_dim": 2, "fiber_dim": 1, "shear": shear}
    }))
    .unwrap()
}

fn prolonged_residual(body: &AlgebroidBody, rng: &mut ChaCha8Rng) -> Res<(f64, f64)> {
    let (a, pi) = body.build().map_err(e)?;
    let pi = pi.ok_or("no fibration")?;
    let mut jac = 0.0f64;
    for _ in 0..5 {
        let x = DVector::from_fn(a.base_dim, |_, _| rng.random_range(-1.0..1.0));
        jac = jac.max(a.jacobi_defect(&x));
    }
    let p = prolong_algebroid(&a, &pi).map_err(e)?;
    let out = p.to_chart();
    let mut res = 0.0f64;
    for _ in 0..20 {
        let x = DVector::from_fn(pi.dim_p, |_, _| rng.random_range(-1.0..1.0));
        res = res.max(out.almost_lie_residual(&x));
    }
    Ok((res, jac))
}

fn almost_lie() -> Res<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let loopoids = [
        product_loopoid(&SmoothLoopChart::planar_h(), 2),
        product_loopoid(&SmoothLoopChart::cubic_line(), 1),
        product_loopoid(&SmoothLoopChart::octonion(), 1),
        pair_groupoid(2),
        loopoid("pair_prolongation.json"),
        loopoid("heisenberg_prolongation.json"),
    ];
    let mut lo = 0.0f64;
    for q in &loopoids {
        let r = check_almost_lie(q, 3, &mut rng).map_err(e)?;
        lo = lo.max(r.left_residual).max(r.right_residual);
    }
    let fixed = match load("non_jacobi_algebroid.json").body {
        Body::Algebroid(a) => a,
        _ => unreachable!(),
    };
    let (fixed_res, fixed_jac) = prolonged_residual(&fixed, &mut rng)?;
    let (seeded_res, seeded_jac) = prolonged_residual(&seeded_non_jacobi(17), &mut rng)?;
    let detail = format!(
        "loopoids {lo:.2e}; prolongations: fixed {fixed_res:.2e} (Jacobi defect {fixed_jac:.2}), seeded {seeded_res:.2e} (Jacobi defect {seeded_jac:.2})"
    );
    need(
        lo < 1e-6 && fixed_res < 1e-6 && seeded_res < 1e-6 && fixed_jac > 1e-3 && seeded_jac > 1e-3,
        detail.clone(),
    )?;
    Ok(detail)
}

fn prolongation_of_broken_anchor() -> Res<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let body = match load("broken_anchor_algebroid.json").body {
        Body::Algebroid(a) => a,
        _ => unreachable!(),
    };
    let (res, _) = prolonged_residual(&body, &mut rng)?;
    let detail = format!("almost-Lie residual of the prolongation {res:.3}; with pi = id the output is the input");
    need(res < 1e-6, detail.clone())?;
    Ok(detail)
}

fn tangent_cotangent() -> Res<String> {
    let cubic = product_loopoid(&SmoothLoopChart::cubic_line(), 0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut terr = 0.0f64;
    for _ in 0..100 {
        let (x, y): (f64, f64) = (rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
        let (xd, yd): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let a = TangentElement::new(dvector![x], dvector![xd]).map_err(e)?;
        let b = TangentElement::new(dvector![y], dvector![yd]).map_err(e)?;
        let p = tangent_multiply(&cubic, &a, &b).map_err(e)?;
        terr = terr.max((p.vector[0] - (xd * (1.0 + 2.0 * x * y) + yd * (1.0 + x * x))).abs());
    }
    let lf = LieFunctor::new(&cubic, &DVector::zeros(0)).map_err(e)?;
    let mut cerr = 0.0f64;
    for _ in 0..100 {
        let (x, p): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0));
        let mu = CovectorElement::new(dvector![x], dvector![p]).map_err(e)?;
        let b = cotangent_fibration(&lf, FiberSide::Beta, &mu).map_err(e)?;
        let a = cotangent_fibration(&lf, FiberSide::Alpha, &mu).map_err(e)?;
        cerr = cerr.max((b[0] - p * (1.0 + x * x)).abs()).max((a[0] - p).abs());
    }
    let q = product_loopoid(&SmoothLoopChart::planar_h(), 2);
    let rep = check_tangent_loopoid(&q, 20, &mut rng).map_err(e)?;
    let detail = format!(
        "tangent product {terr:.2e}, cotangent fibrations {cerr:.2e}, bisection vs curves {:.2e}",
        rep.curve_residual
    );
    need(terr < 1e-8 && cerr < 1e-7 && rep.curve_residual < 1e-6, detail.clone())?;
    Ok(detail)
}

fn sqrt21_points() -> (f64, f64, f64, f64) {
    let r = 21f64.sqrt();
    let tail = 0.5 * (125.0 - 16.0 * r).sqrt();
    (0.5 * (1.0 + r), 0.5 * (r - 3.0), 1.5 - r + tail, -2.5 + r + tail)
}

fn plus_formula(g: &Point) -> [f64; 4] {
    [g[0] + g[1] * g[1], g[0] * g[0] + g[1], g[4], g[5]]
}

fn minus_formula_printed(g: &Point) -> [f64; 4] {
    [g[0] + g[1] * g[0], g[1] + g[0] * g[1], g[2], g[3]]
}

fn mechanics_printed_point() -> Res<String> {
    let t0 = Instant::now();
    let (spec, sys) = system("planar_h_mechanics.json");
    let g0 = spec.initial();
    let (z1, w1, z2, w2) = sqrt21_points();
    let h = sys.step_solve(&g0, None).map_err(e)?;
    let step_err = (h[0] - z1).abs().max((h[1] - w1).abs());
    let traj = sys.trajectory(&g0, 2, None).map_err(e)?;
    let g2 = &traj.points[2];
    let traj_err = (g2[0] - z2).abs().max((g2[1] - w2).abs());
    let pts: Vec<Point> = traj.points.iter().map(|p| Point::from_row_slice(p)).collect();
    let mut matching = 0.0f64;
    for w in pts.windows(2) {
        matching = matching.max(sys.legendre_match_residual(&w[0], &w[1]).map_err(e)?);
    }
    // Legendre transforms: the loop components and F+L everywhere, plus the
    // full printed F-L on the trajectory (its pair part vanishes there)
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut leg = 0.0f64;
    let mut probes: Vec<Point> = (0..100)
        .map(|_| DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    probes.extend(pts.iter().cloned());
    for g in &probes {
        let plus = sys.legendre(LegendreSide::Plus, g).map_err(e)?;
        let minus = sys.legendre(LegendreSide::Minus, g).map_err(e)?;
        let (pf, mf) = (plus_formula(g), minus_formula_printed(g));
        for k in 0..4 {
            leg = leg.max((plus.components[k] - pf[k]).abs());
        }
        for k in 0..2 {
            leg = leg.max((minus.components[k] - mf[k]).abs());
        }
    }
    for g in &pts {
        let minus = sys.legendre(LegendreSide::Minus, g).map_err(e)?;
        let mf = minus_formula_printed(g);
        for k in 0..4 {
            leg = leg.max((minus.components[k] - mf[k]).abs());
        }
    }
    // printed directional derivatives at units
    let mut regular = true;
    let mut table_err = 0.0f64;
    for u in [dvector![0.0, 0.0], dvector![0.4, -0.3]] {
        let reg = sys.regularity_check(&u, 0.1).map_err(e)?;
        regular &= reg.regular;
        for k in 0..4 {
            for j in 0..6 {
                let plus_want = match (k, j) {
                    (0, 0) | (1, 1) | (2, 4) | (3, 5) => 1.0,
                    _ => 0.0,
                };
                table_err = table_err.max((reg.plus_table[k][j] - plus_want).abs());
                if ![2, 3].contains(&j) {
                    let minus_want = if k == j { 1.0 } else { 0.0 };
                    table_err = table_err.max((reg.minus_table[k][j] - minus_want).abs());
                }
            }
        }
    }
    // the CLI trajectory table, row 1
    let rep = execute(Command::Simulate, &load("planar_h_mechanics.json"), 0, &Options::default()).map_err(e)?;
    let row = &rep.table.ok_or("no trajectory table")?.rows[1];
    let csv_err = (row[1].parse::<f64>().unwrap() - z1)
        .abs()
        .max((row[2].parse::<f64>().unwrap() - w1).abs());
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "step {step_err:.2e}, two steps {traj_err:.2e} (printed third element evaluates to {z2:.10}), Legendre {leg:.2e}, regular {regular}, derivative tables {table_err:.2e}, matching {matching:.2e}, CSV row 1 {csv_err:.2e}, {secs:.2}s"
    );
    need(
        step_err < 1e-8
            && traj_err < 1e-7
            && leg < 1e-7
            && regular
            && table_err < 1e-7
            && matching < 1e-7
            && csv_err < 1e-7
            && secs < 10.0,
        detail.clone(),
    )?;
    Ok(detail)
}

/// Pair part of the example under the sign forced by the normal-bundle class:
/// F-L has components -x3, -x4, the Euler-Lagrange equation in X3, X4 reads
/// x5 + x'3 = 0 and forces beta(g) = 0.
fn mechanics_pair_part_consistent() -> Res<String> {
    let (_, sys) = system("planar_h_mechanics.json");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut leg = 0.0f64;
    for _ in 0..50 {
        let g = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let minus = sys.legendre(LegendreSide::Minus, &g).map_err(e)?;
        leg = leg.max((minus.components[2] + g[2]).abs()).max((minus.components[3] + g[3]).abs());
    }
    let reg = sys.regularity_check(&dvector![0.0, 0.0], 0.1).map_err(e)?;
    let tab = (reg.minus_table[2][2] + 1.0).abs().max((reg.minus_table[3][3] + 1.0).abs());
    let (z1, w1, z2, w2) = sqrt21_points();
    let g0 = dvector![1.0, 2.0, 0.3, -0.2, 0.0, 0.0];
    let seed = dvector![z1, w1, 0.0, 0.0, 0.0, 0.0];
    let traj = sys.trajectory(&g0, 2, Some(&seed)).map_err(e)?;
    let (g1, g2) = (&traj.points[1], &traj.points[2]);
    let terr = [g1[0] - z1, g1[1] - w1, g2[0] - z2, g2[1] - w2, g1[4], g1[5], g2[4], g2[5]]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let detail = format!(
        "F-L pair components {leg:.2e}, T F-L on d/dx3, d/dx4 {tab:.2e}, trajectory from (1,2,0.3,-0.2,0,0) {terr:.2e}"
    );
    need(leg < 1e-7 && tab < 1e-7 && terr < 1e-7, detail.clone())?;
    Ok(detail)
}

fn mechanics_generic_pair_part() -> Res<String> {
    let (_, sys) = system("planar_h_mechanics.json");
    let (a, b, c, d) = (0.3, -0.2, 0.5, 0.7);
    let g0 = dvector![1.0, 2.0, a, b, c, d];
    let (z1, w1, _, _) = sqrt21_points();
    match sys.step_solve(&g0, None) {
        Ok(h) => {
            let want = [z1, w1, c, d, c, d];
            let err = want.iter().enumerate().fold(0.0f64, |m, (i, w)| m.max((h[i] - w).abs()));
            need(err < 1e-8, format!("step error {err:.2e}"))?;
            Ok(format!("step error {err:.2e}"))
        }
        Err(err) => Err(format!(
            "step from (1,2,{a},{b},{c},{d}): {err}; the pair equation x5 + x'3 = 0 has no composable solution unless (c, d) = 0"
        )),
    }
}

fn printed_pair_signs() -> Res<String> {
    let (_, sys) = system("planar_h_mechanics.json");
    let q = &sys.loopoid;
    let lf = LieFunctor::new(q, &DVector::zeros(2)).map_err(e)?;
    let g = dvector![0.2, -0.4, 0.3, -0.2, 0.5, 0.7];
    let r3 = lf.prolong(Side::Right, &basis_section(4, 2), &g).map_err(e)?;
    let prolong_err = (r3 - basis_vec(6, 2)).amax();
    let minus = sys.legendre(LegendreSide::Minus, &g).map_err(e)?;
    let mf = minus_formula_printed(&g);
    let leg_err = (minus.components[2] - mf[2]).abs().max((minus.components[3] - mf[3]).abs());
    let detail = format!("->X3 vs +d/dx3 {prolong_err:.2e}, F-L pair components vs +x3, +x4 {leg_err:.2e}");
    need(prolong_err < 1e-7 && leg_err < 1e-7, detail.clone())?;
    Ok(detail)
}

/// Chein double of S3: an order-12 Moufang loop.
fn moufang_12(s3: &CayleyTable) -> CayleyTable {
    let inv = |g: usize| (0..6).find(|&h| s3.mul(g, h) == 0).unwrap();
    CayleyTable::from_fn(12, |a, b| {
        let (g, i, h, j) = (a % 6, a / 6, b % 6, b / 6);
        match (i, j) {
            (0, 0) => s3.mul(g, h),
            (0, 1) => 6 + s3.mul(h, g),
            (1, 0) => 6 + s3.mul(g, inv(h)),
            _ => s3.mul(inv(h), g),
        }
    })
    .unwrap()
}

fn s3() -> CayleyTable {
    let perms = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [1, 0, 2], [0, 2, 1], [2, 1, 0]];
    let idx = |p: [usize; 3]| perms.iter().position(|q| *q == p).unwrap();
    CayleyTable::from_fn(6, |a, b| {
        let (p, q) = (perms[a], perms[b]);
        idx([p[q[0]], p[q[1]], p[q[2]]])
    })
    .unwrap()
}

fn finite_suite() -> Res<String> {
    let t0 = Instant::now();
    let cfg = ClassifyConfig::default();
    let z4 = CayleyTable::cyclic(4);
    let z2 = transversal_loop(&z4, &[0, 2], &[0, 1]).map_err(e)?;
    let z2_ok = z2.table == vec![vec![0, 1], vec![1, 0]];
    let g = s3();
    let t = transversal_loop(&g, &[0, 3], &[0, 1, 2]).map_err(e)?;
    let rep = classify(&t, &cfg).map_err(e)?;
    let s3_ok = rep.exhaustive && rep.is_latin_square && rep.unit == Some(0) && rep.left_inverse_property;
    // conjugation by the 3-cycle permutes S3 and lifts to the Moufang double
    let conj = |x: usize| g.mul(g.mul(1, x), 2);
    let lift = |k: usize| -> Vec<usize> {
        (0..12)
            .map(|a| {
                let mut x = a % 6;
                for _ in 0..k {
                    x = conj(x);
                }
                x + 6 * (a / 6)
            })
            .collect()
    };
    let m12 = moufang_12(&g);
    let base = classify(&m12, &cfg).map_err(e)?;
    let sd = semidirect_loop(&m12, &[lift(0), lift(1), lift(2)]).map_err(e)?;
    let sd_rep = classify(&sd, &cfg).map_err(e)?;
    let z3 = CayleyTable::cyclic(3);
    let sd3 = semidirect_loop(&z3, &[vec![0, 1, 2], vec![0, 2, 1]]).map_err(e)?;
    let sd3_rep = classify(&sd3, &cfg).map_err(e)?;
    let sd_ok = base.inverse_property
        && !base.associative
        && sd_rep.exhaustive
        && sd_rep.inverse_property
        && sd3_rep.inverse_property;
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "Z4 transversal is Z2 {z2_ok}, S3 transversal left inverse loop {s3_ok}, semidirect of order-12 Moufang loop (order {}) and Z3 x| Z2 inverse property {sd_ok}, {secs:.3}s",
        sd.order
    );
    need(z2_ok && s3_ok && sd_ok && secs < 1.0, detail.clone())?;
    Ok(detail)
}

fn every_s3_transversal() -> Res<String> {
    let g = s3();
    let mut bad = Vec::new();
    for s in [[0, 1, 2], [0, 1, 4], [0, 5, 2], [0, 5, 4]] {
        let t = transversal_loop(&g, &[0, 3], &s).map_err(e)?;
        let rep = classify(&t, &ClassifyConfig::default()).map_err(e)?;
        if !(rep.is_latin_square && rep.left_inverse_property) {
            bad.push(format!(
                "{s:?} (latin {}, left inverse property {})",
                rep.is_latin_square, rep.left_inverse_property
            ));
        }
    }
    need(bad.is_empty(), format!("not left inverse loops: {}", bad.join(", ")))?;
    Ok("all four transversals".into())
}

fn determinism() -> Res<String> {
    let bin = env!("CARGO_BIN_EXE_loopoid-lab");
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/acceptance.sh");
    let dir = tempfile::tempdir().map_err(e)?;
    let outs = [dir.path().join("a"), dir.path().join("b")];
    for o in &outs {
        let st = Proc::new("bash")
            .arg(&script)
            .arg(bin)
            .arg(o)
            .arg("0")
            .status()
            .map_err(e)?;
        need(st.success(), format!("script exited with {st}"))?;
    }
    let mut names: Vec<_> = std::fs::read_dir(&outs[0])
        .map_err(e)?
        .map(|d| d.unwrap().file_name())
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for n in &names {
        let a = std::fs::read(outs[0].join(n)).map_err(e)?;
        let b = std::fs::read(outs[1].join(n)).map_err(e)?;
        if a != b {
            differing.push(n.to_string_lossy().into_owned());
        }
    }
    let detail = format!("{} artifacts compared, {} differ", names.len(), differing.len());
    need(names.len() > 20 && differing.is_empty(), format!("{detail}: {differing:?}"))?;
    Ok(detail)
}

fn main() {
    let lines = vec![
        Line { id: "1", title: "octonion suite", asserted: true, outcome: octonion_suite() },
        Line { id: "2", title: "structure-constant extraction", asserted: true, outcome: structure_constants() },
        Line { id: "3", title: "Lie functor on the product loopoid over H", asserted: true, outcome: lie_functor_h() },
        Line { id: "4", title: "inverse-property sign theorem", asserted: true, outcome: sign_theorem() },
        Line { id: "5", title: "almost-Lie brackets", asserted: true, outcome: almost_lie() },
        Line {
            id: "5'",
            title: "prolongation of a skew algebroid whose anchor is not a bracket morphism",
            asserted: false,
            outcome: prolongation_of_broken_anchor(),
        },
        Line { id: "6", title: "tangent and cotangent structures", asserted: true, outcome: tangent_cotangent() },
        Line {
            id: "7",
            title: "discrete mechanics from (1,2,0,0,0,0)",
            asserted: true,
            outcome: mechanics_printed_point(),
        },
        Line {
            id: "7c",
            title: "discrete mechanics, pair part with the normal-bundle sign",
            asserted: true,
            outcome: mechanics_pair_part_consistent(),
        },
        Line {
            id: "7g",
            title: "discrete mechanics from (1,2,a,b,c,d), generic a,b,c,d",
            asserted: false,
            outcome: mechanics_generic_pair_part(),
        },
        Line {
            id: "7s",
            title: "printed pair-part signs (->X3 = +d/dx3, F-L = ... + x3 X^3 + x4 X^4)",
            asserted: false,
            outcome: printed_pair_signs(),
        },
        Line { id: "8", title: "finite suite", asserted: true, outcome: finite_suite() },
        Line {
            id: "8'",
            title: "every left transversal of a 2-element subgroup of S3",
            asserted: false,
            outcome: every_s3_transversal(),
        },
        Line { id: "9", title: "determinism of the CLI acceptance script", asserted: true, outcome: determinism() },
    ];
    let mut failed = 0;
    for l in &lines {
        let (tag, detail) = match &l.outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        let note = if l.asserted { "" } else { " [info]" };
        println!("{tag} {:<3} {}{note}: {detail}", l.id, l.title);
        if l.asserted && l.outcome.is_err() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} asserted criteria failed");
        std::process::exit(1);
    }
}
