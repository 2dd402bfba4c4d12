use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::algebroid::{check_almost_lie_chart, prolong_algebroid};
use crate::error::{Error, Result};
use crate::finite::{classify, ClassifyConfig};
use crate::lie_functor::{check_almost_lie, LieFunctor};
use crate::loopoid::{check_axioms, isotropy_samples};
use crate::mechanics::LegendreSide;
use crate::numeric::Point;
use crate::octonion::{Octonion, IDX, SIGN};
use crate::smooth_loop::{bracket_loop_of, Side};
use crate::tangent::check_tangent_loopoid;

use super::report::{format_f64, Check, CsvTable, Report};
use super::spec::{Body, FiniteSpec, SpecKind, StructureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    VerifyFinite,
    Octonion,
    LoopAlgebra,
    LoopoidCheck,
    LieFunctor,
    TangentCheck,
    Simulate,
    Legendre,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyFinite => "verify-finite",
            Command::Octonion => "octonion",
            Command::LoopAlgebra => "loop-algebra",
            Command::LoopoidCheck => "loopoid-check",
            Command::LieFunctor => "lie-functor",
            Command::TangentCheck => "tangent-check",
            Command::Simulate => "simulate",
            Command::Legendre => "legendre",
        }
    }
}

/// Flag overrides shared by all subcommands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    pub samples: Option<usize>,
    pub tol: Option<f64>,
    pub steps: Option<usize>,
}

fn wrong_kind(cmd: Command, kind: SpecKind, expected: &str) -> Error {
    Error::SchemaError {
        path: "$.kind".into(),
        message: format!(
            "{} expects a {expected} spec, got '{}'",
            cmd.name(),
            kind.as_str()
        ),
    }
}

fn nested(dim: usize, flat: &[f64]) -> Value {
    json!((0..dim)
        .map(|k| {
            (0..dim)
                .map(|i| flat[(k * dim + i) * dim..(k * dim + i + 1) * dim].to_vec())
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>())
}

fn vec_of(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

pub fn execute(cmd: Command, spec: &StructureSpec, seed: u64, opts: &Options) -> Result<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = spec.kind();
    let (checks, result, table) = match cmd {
        Command::VerifyFinite => verify_finite(cmd, spec, seed, opts)?,
        Command::Octonion => octonion(cmd, spec, opts, &mut rng)?,
        Command::LoopAlgebra => loop_algebra(cmd, spec, opts)?,
        Command::LoopoidCheck => loopoid_check(cmd, spec, opts, &mut rng)?,
        Command::LieFunctor => lie_functor(cmd, spec, opts, &mut rng)?,
        Command::TangentCheck => tangent_check(cmd, spec, opts, &mut rng)?,
        Command::Simulate => simulate(cmd, spec, opts)?,
        Command::Legendre => legendre(cmd, spec, opts)?,
    };
    let report = Report::new(cmd.name(), kind.as_str(), seed, checks, result);
    Ok(match table {
        Some(t) => report.with_table(t),
        None => report,
    })
}

type Outcome = (Vec<Check>, Value, Option<CsvTable>);

fn verify_finite(cmd: Command, spec: &StructureSpec, seed: u64, opts: &Options) -> Result<Outcome> {
    let Body::Finite(f) = &spec.body else {
        return Err(wrong_kind(cmd, spec.kind(), "finite"));
    };
    let t = f.build()?;
    let mut cfg = ClassifyConfig {
        seed,
        ..ClassifyConfig::default()
    };
    if let Some(n) = opts.samples {
        cfg.samples = n;
    }
    let rep = classify(&t, &cfg)?;
    let is_loop = rep.is_latin_square && rep.unit.is_some();
    let mut checks = vec![Check::flag(
        "implication_chain",
        "associative => Moufang => left and right Bol; inverse property => left and right inverse property",
        rep.implication_chain_holds(),
    )];
    match f {
        FiniteSpec::Table { .. } => {
            checks.push(Check::flag("loop", "table is a Latin square with a two-sided unit", is_loop).info());
        }
        FiniteSpec::Cyclic { .. } => {
            checks.push(Check::flag("cyclic_group", "Z_n is an associative loop", is_loop && rep.associative));
        }
        FiniteSpec::Transversal { .. } => {
            checks.push(Check::flag(
                "transversal_left_inverse_loop",
                "a left transversal containing the unit is a left inverse loop under s o s' = p_S(ss')",
                is_loop && rep.left_inverse_property,
            ));
        }
        FiniteSpec::Semidirect { base, .. } => {
            checks.push(Check::flag("semidirect_loop", "the semidirect product of a loop by automorphisms is a loop", is_loop));
            let base_t = crate::finite::CayleyTable::new(base.clone(), None)?;
            let base_rep = classify(&base_t, &cfg)?;
            if base_rep.inverse_property {
                checks.push(Check::flag(
                    "semidirect_inverse_property",
                    "the semidirect product of an inverse-property loop by automorphisms has the inverse property",
                    rep.inverse_property,
                ));
            }
        }
    }
    let result = json!({
        "construction": f.construction(),
        "order": t.order,
        "table": t.table,
        "identities": rep,
    });
    Ok((checks, result, None))
}

fn basis_name(i: usize, s: i8) -> String {
    format!("{}e{i}", if s < 0 { "-" } else { "" })
}

fn random_octonion<R: Rng + ?Sized>(rng: &mut R) -> Octonion {
    Octonion(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

fn octonion(cmd: Command, spec: &StructureSpec, opts: &Options, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let Body::Octonion(o) = &spec.body else {
        return Err(wrong_kind(cmd, spec.kind(), "octonion"));
    };
    // basis table: unit e0, e_i^2 = -1, anticommuting units, alternative on basis triples
    let mut violations = 0usize;
    for i in 0..8 {
        for j in 0..8 {
            let p = Octonion::basis(i) * Octonion::basis(j);
            if p.0.iter().filter(|v| **v != 0.0).count() != 1 {
                violations += 1;
            }
            let q = Octonion::basis(j) * Octonion::basis(i);
            let expect_commute = i == 0 || j == 0 || i == j;
            if expect_commute != (p == q) || (!expect_commute && p != -q) {
                violations += 1;
            }
            let (a, b) = (Octonion::basis(i), Octonion::basis(j));
            if (a * a) * b != a * (a * b) || (a * b) * b != a * (b * b) {
                violations += 1;
            }
        }
        if i > 0 && Octonion::basis(i) * Octonion::basis(i) != -Octonion::ONE {
            violations += 1;
        }
    }
    let norm_n = opts.samples.or(o.norm_samples).unwrap_or(10_000);
    let mut norm_err = 0.0f64;
    for _ in 0..norm_n {
        let (g, h) = (random_octonion(rng), random_octonion(rng));
        let want = g.norm() * h.norm();
        norm_err = norm_err.max(((g * h).norm() - want).abs() / want);
    }
    let mou_n = opts.samples.map(|s| s.min(1000)).or(o.moufang_samples).unwrap_or(1000);
    let mut mou = 0.0f64;
    let unit = |rng: &mut ChaCha8Rng| {
        let g = random_octonion(rng);
        g.scale(1.0 / g.norm())
    };
    for _ in 0..mou_n {
        let (x, y, z) = (unit(rng), unit(rng), unit(rng));
        let r1 = z * (x * (z * y)) - ((z * x) * z) * y;
        let r2 = x * (z * (y * z)) - ((x * z) * y) * z;
        let r3 = (z * x) * (y * z) - (z * (x * y)) * z;
        mou = mou.max(r1.max_abs()).max(r2.max_abs()).max(r3.max_abs());
    }
    let mut products = Vec::new();
    for (a, b) in &o.products {
        let (x, y): (Octonion, Octonion) = (a.parse()?, b.parse()?);
        let p = x * y;
        products.push(json!({"a": a, "b": b, "product": p.to_string(), "components": p.0}));
    }
    let table: Vec<Vec<String>> = (0..8)
        .map(|i| (0..8).map(|j| basis_name(IDX[i][j], SIGN[i][j])).collect())
        .collect();
    let checks = vec![
        Check::below(
            "basis_table",
            "octonion basis table: unit e0, e_i^2 = -1, anticommuting imaginary units, alternative on basis triples",
            violations as f64,
            0.5,
        ),
        Check::below("norm_multiplicative", "|gh| = |g||h| (relative error)", norm_err, opts.tol.unwrap_or(1e-12)),
        Check::below("moufang", "Moufang identities on unit octonions", mou, opts.tol.unwrap_or(1e-9)),
    ];
    let result = json!({
        "table": table,
        "norm_samples": norm_n,
        "moufang_samples": mou_n,
        "products": products,
    });
    Ok((checks, result, None))
}

fn loop_algebra(cmd: Command, spec: &StructureSpec, opts: &Options) -> Result<Outcome> {
    let lspec = match &spec.body {
        Body::Loop(l) => l,
        Body::Loopoid(lp) => lp.loop_factor().ok_or_else(|| {
            Error::Unsupported("loop-algebra needs a loop or a product loopoid".into())
        })?,
        _ => return Err(wrong_kind(cmd, spec.kind(), "loop or loopoid")),
    };
    let l = lspec.build("$.body")?;
    let (c, s) = l.extract_structure_constants()?;
    let (_, back) = bracket_loop_of(s.clone()).extract_structure_constants()?;
    let dim = l.dim;
    let tol = opts.tol.unwrap_or(1e-6);
    let checks = vec![
        Check::below(
            "bracket_loop_round_trip",
            "the loop x + y + [x,y]/2 has the extracted skew algebra as its bracket",
            back.max_abs_diff(&s),
            tol,
        ),
        Check::below("jacobi_defect", "Jacobi identity of the skew algebra", s.jacobi_defect(), tol).info(),
    ];
    let mut t = CsvTable::new(["k", "i", "j", "s"]);
    for k in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                t.push(vec![
                    (k + 1).to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    format_f64(s.get(k, i, j)),
                ]);
            }
        }
    }
    let result = json!({
        "dim": dim,
        "skew": nested(dim, s.constants()),
        "second_derivatives": nested(dim, &c),
    });
    Ok((checks, result, Some(t)))
}

fn loopoid_of(cmd: Command, spec: &StructureSpec) -> Result<crate::loopoid::ChartedQuasiloopoid> {
    match &spec.body {
        Body::Loopoid(lp) => lp.build("$.body"),
        _ => Err(wrong_kind(cmd, spec.kind(), "loopoid")),
    }
}

fn loopoid_check(cmd: Command, spec: &StructureSpec, opts: &Options, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let q = loopoid_of(cmd, spec)?;
    let n = opts.samples.unwrap_or(20);
    let rep = check_axioms(&q, n, rng)?;
    let mut checks = vec![Check::flag(
        "quasiloopoid",
        "unit section, submersions, unities associativity and bijective fiber translations",
        rep.quasiloopoid,
    )];
    let lp = Check::flag("loopoid", "alpha and beta are morphisms of the product", rep.loopoid);
    checks.push(if q.claims_loopoid { lp } else { lp.info() });
    let ip = Check::flag("inverse_property", "iota(g)(gh) = h and (hg)iota(g) = h", rep.inverse_property);
    checks.push(if q.claims_ip() { ip } else { ip.info() });
    let iso = isotropy_samples(&q, &DVector::zeros(q.dim_m), n.min(10), rng).ok();
    let result = json!({
        "name": q.name,
        "dim_g": q.dim_g,
        "dim_m": q.dim_m,
        "rank": q.rank(),
        "axioms": rep,
        "isotropy": iso,
    });
    Ok((checks, result, None))
}

fn lie_functor(cmd: Command, spec: &StructureSpec, opts: &Options, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    if let Body::Algebroid(a) = &spec.body {
        return algebroid_report(a, opts, rng);
    }
    let q = loopoid_of(cmd, spec)?;
    let u = DVector::zeros(q.dim_m);
    let lf = LieFunctor::new(&q, &u)?;
    let fr = lf.frame(&u)?;
    let r = q.rank();
    let left = lf.bracket_constants(Side::Left, &u)?;
    let right = lf.bracket_constants(Side::Right, &u)?;
    let al = check_almost_lie(&q, opts.samples.unwrap_or(3), rng)?;
    let tol = opts.tol.unwrap_or(1e-6);
    let sign = left.iter().zip(&right).fold(al.sign_residual, |m, (a, b)| m.max((a + b).abs()));
    let mut checks = Vec::new();
    let gate = |c: Check, on: bool| if on { c } else { c.info() };
    checks.push(gate(
        Check::below("almost_lie_left", "rho[X,Y]_l = [rho X, rho Y] on loopoids", al.left_residual, tol),
        q.claims_loopoid,
    ));
    checks.push(gate(
        Check::below("almost_lie_right", "rho[X,Y]_r = [rho X, rho Y] on loopoids", al.right_residual, tol),
        q.claims_loopoid,
    ));
    checks.push(gate(
        Check::below("anchor_opposition", "rho_r = -rho_l", al.anchor_opposition, tol),
        q.claims_loopoid,
    ));
    checks.push(gate(
        Check::below("sign_theorem", "[X,Y]_l = -[X,Y]_r on inverse-property loopoids", sign, tol),
        q.claims_ip(),
    ));
    if q.claims_ip() {
        checks.push(Check::below(
            "inverse_exchanges_frames",
            "T iota maps the alpha-vertical frame to minus the beta-vertical frame",
            lf.inverse_exchange_residual(&u)?,
            opts.tol.unwrap_or(1e-7),
        ));
    }
    let mut t = CsvTable::new(["side", "k", "i", "j", "value"]);
    for (side, c) in [("left", &left), ("right", &right)] {
        for k in 0..r {
            for i in 0..r {
                for j in 0..r {
                    t.push(vec![
                        side.to_string(),
                        (k + 1).to_string(),
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        format_f64(c[(k * r + i) * r + j]),
                    ]);
                }
            }
        }
    }
    let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|row| row.iter().copied().collect()).collect()
    };
    let result = json!({
        "unit": vec_of(&u),
        "rank": r,
        "left": nested(r, &left),
        "right": nested(r, &right),
        "anchor_left": rows(&fr.rho_left),
        "anchor_right": rows(&fr.rho_right),
        "alpha_vertical": rows(&fr.alpha_vertical),
        "beta_vertical": rows(&fr.beta_vertical),
        "almost_lie": al,
    });
    Ok((checks, result, Some(t)))
}

fn algebroid_report(
    a: &super::spec::AlgebroidBody,
    opts: &Options,
    rng: &mut ChaCha8Rng,
) -> Result<Outcome> {
    let (chart, pi) = a.build()?;
    let n = opts.samples.unwrap_or(20);
    let tol = opts.tol.unwrap_or(1e-6);
    let rep = check_almost_lie_chart(&chart, n, rng);
    let input_almost_lie = rep.almost_lie_residual < tol;
    let mut checks = vec![
        Check::below("almost_lie", "rho[X,Y] = [rho X, rho Y]", rep.almost_lie_residual, tol).info(),
        Check::below("jacobi", "Jacobi identity of the bracket", rep.jacobi_defect, tol).info(),
    ];
    let mut prolonged = Value::Null;
    if let Some(pi) = pi {
        let p = prolong_algebroid(&chart, &pi)?;
        let out = p.to_chart();
        let (mut closure, mut out_res) = (0.0f64, 0.0f64);
        for _ in 0..n.min(10) {
            let x = DVector::from_fn(pi.dim_p, |_, _| rng.random_range(-1.0..1.0));
            closure = closure.max(p.structure_at(&x, 1e-4).1);
            out_res = out_res.max(out.almost_lie_residual(&x));
        }
        let gate = |c: Check| if input_almost_lie { c } else { c.info() };
        checks.push(gate(Check::below(
            "prolongation_closure",
            "the bracket of the prolongation closes on the frame",
            closure,
            tol,
        )));
        checks.push(gate(Check::below(
            "prolongation_almost_lie",
            "the prolongation of an almost-Lie algebroid is almost-Lie",
            out_res,
            tol,
        )));
        prolonged = json!({"rank": p.rank(), "base_dim": pi.dim_p, "closure_defect": closure, "almost_lie_residual": out_res});
    }
    let result = json!({"almost_lie": rep, "prolongation": prolonged});
    Ok((checks, result, None))
}

fn tangent_check(cmd: Command, spec: &StructureSpec, opts: &Options, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let q = loopoid_of(cmd, spec)?;
    let rep = check_tangent_loopoid(&q, opts.samples.unwrap_or(10), rng)?;
    let tol = opts.tol.unwrap_or(1e-6);
    let on = q.claims_loopoid;
    let gate = |c: Check| if on { c } else { c.info() };
    let mut checks = vec![
        gate(Check::below("t_alpha_morphism", "T alpha(X . Y) = T alpha(X)", rep.alpha_morphism_residual, tol)),
        gate(Check::below("t_beta_morphism", "T beta(X . Y) = T beta(Y)", rep.beta_morphism_residual, tol)),
        gate(Check::below("left_unit", "T eps(T alpha X) . X = X", rep.left_unit_residual, tol)),
        gate(Check::below("right_unit", "X . T eps(T beta X) = X", rep.right_unit_residual, tol)),
        gate(Check::flag(
            "translation_injective",
            "tangent translations are injective on tangent fibers",
            rep.left_translation_rank_min == rep.rank && rep.right_translation_rank_min == rep.rank,
        )),
        gate(Check::below(
            "section_independence",
            "the bisection formula does not depend on the chosen sections",
            rep.section_independence_residual,
            tol,
        )),
        gate(Check::below(
            "curve_agreement",
            "bisection formula agrees with differentiating products of curves",
            rep.curve_residual,
            tol,
        )),
    ];
    if let Some(v) = rep.inverse_residual {
        checks.push(Check::below("tangent_inverse", "T iota is the inverse of TG", v, tol));
    }
    Ok((checks, serde_json::to_value(&rep).unwrap_or(Value::Null), None))
}

fn system_of(cmd: Command, spec: &StructureSpec) -> Result<(&super::spec::SystemSpec, crate::mechanics::DiscreteLagrangianSystem)> {
    match &spec.body {
        Body::System(s) => Ok((s, s.build()?)),
        _ => Err(wrong_kind(cmd, spec.kind(), "system")),
    }
}

fn simulate(cmd: Command, spec: &StructureSpec, opts: &Options) -> Result<Outcome> {
    let (body, s) = system_of(cmd, spec)?;
    let steps = opts.steps.unwrap_or(body.steps);
    let seed_point = body.branch_seed.as_ref().map(|v| Point::from_row_slice(v));
    let traj = s.trajectory(&body.initial(), steps, seed_point.as_ref())?;
    let pts: Vec<Point> = traj.points.iter().map(|p| Point::from_row_slice(p)).collect();
    let mut matching = 0.0f64;
    for w in pts.windows(2) {
        matching = matching.max(s.legendre_match_residual(&w[0], &w[1])?);
    }
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(*x));
    let checks = vec![
        Check::below(
            "el_residuals",
            "consecutive pairs solve the discrete Euler-Lagrange equations",
            max(&traj.residuals),
            opts.tol.unwrap_or(s.newton.tol * 10.0),
        ),
        Check::below(
            "composable_gaps",
            "consecutive pairs are composable",
            max(&traj.composable_gaps),
            s.loopoid.composable_tol,
        ),
        Check::below(
            "legendre_matching",
            "F-L(g_{k+1}) = F+L(g_k) along a solution",
            matching,
            opts.tol.unwrap_or(1e-7),
        ),
    ];
    let dim = s.loopoid.dim_g;
    let mut header = vec!["step".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.extend(["el_residual".to_string(), "gap".to_string()]);
    let mut t = CsvTable::new(header);
    for (k, p) in traj.points.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(p.iter().map(|v| format_f64(*v)));
        if k == 0 {
            row.extend([String::new(), String::new()]);
        } else {
            row.push(format_f64(traj.residuals[k - 1]));
            row.push(format_f64(traj.composable_gaps[k - 1]));
        }
        t.push(row);
    }
    Ok((checks, serde_json::to_value(&traj).unwrap_or(Value::Null), Some(t)))
}

fn legendre(cmd: Command, spec: &StructureSpec, opts: &Options) -> Result<Outcome> {
    let (body, s) = system_of(cmd, spec)?;
    let g = body.initial();
    let plus = s.legendre(LegendreSide::Plus, &g)?;
    let minus = s.legendre(LegendreSide::Minus, &g)?;
    let u = body
        .unit
        .as_ref()
        .map(|v| Point::from_row_slice(v))
        .unwrap_or_else(|| s.loopoid.alpha(&g));
    let reg = s.regularity_check(&u, body.probe_radius.unwrap_or(0.1))?;
    let tol = opts.tol.unwrap_or(1e-7);
    let mut checks = vec![
        Check::below("plus_cotangent", "F+L = beta~ o dL", plus.cotangent_residual, tol),
        Check::below("minus_cotangent", "F-L = alpha~ o dL", minus.cotangent_residual, tol),
        Check::flag("regular", "F+L is a local diffeomorphism near the units along the fibers", reg.regular).info(),
        Check::flag("minus_regular", "F-L is a local diffeomorphism near the units along the fibers", reg.minus_regular).info(),
    ];
    if s.loopoid.claims_ip() {
        checks.push(Check::flag(
            "regularity_equivalence",
            "on inverse loopoids F+L is regular exactly when F-L is",
            reg.regular == reg.minus_regular,
        ));
    }
    let matching = Check::below(
        "probe_legendre_matching",
        "F-L(step(g)) = F+L(g) at probe points",
        reg.legendre_match_residual.unwrap_or(f64::NAN),
        tol,
    );
    checks.push(matching.info());
    let mut t = CsvTable::new(["transform", "component", "value"]);
    for (name, v) in [("plus", &plus), ("minus", &minus)] {
        for (i, c) in v.components.iter().enumerate() {
            t.push(vec![name.to_string(), (i + 1).to_string(), format_f64(*c)]);
        }
    }
    let result = json!({
        "point": vec_of(&g),
        "plus": plus,
        "minus": minus,
        "regularity": reg,
    });
    Ok((checks, result, Some(t)))
}
