use loopoid_lab::cli_io::{format_f64, parse_spec, CsvTable};
use loopoid_lab::finite::{classify, semidirect_loop, transversal_loop, CayleyTable, ClassifyConfig};
use loopoid_lab::loopoid::{pair_groupoid, product_loopoid};
use loopoid_lab::mechanics::{DiscreteLagrangianSystem, LegendreSide};
use loopoid_lab::numeric::Point;
use loopoid_lab::octonion::Octonion;
use loopoid_lab::poly::{Monomial, Polynomial, ScalarFn};
use loopoid_lab::smooth_loop::{bracket_loop_of, Side, SkewAlgebra, SmoothLoopChart};
use loopoid_lab::tangent::{tangent_multiply, TangentElement};
use nalgebra::{dvector, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn octonion() -> impl Strategy<Value = Octonion> {
    prop::array::uniform8(-2.0f64..2.0).prop_map(Octonion)
}

fn unit_octonion() -> impl Strategy<Value = Octonion> {
    octonion()
        .prop_filter("away from zero", |g| g.norm() > 0.1)
        .prop_map(|g| g.scale(1.0 / g.norm()))
}

/// Z_n1 x Z_n2 with elements relabelled by a permutation fixing 0.
fn relabelled_abelian() -> impl Strategy<Value = CayleyTable> {
    (1usize..5, 1usize..5)
        .prop_flat_map(|(a, b)| {
            let n = a * b;
            (Just((a, b)), Just((1..n).collect::<Vec<_>>()).prop_shuffle())
        })
        .prop_map(|((a, b), rest)| {
            let mut perm = vec![0];
            perm.extend(rest);
            let n = a * b;
            let mut inv = vec![0; n];
            for (i, p) in perm.iter().enumerate() {
                inv[*p] = i;
            }
            CayleyTable::from_fn(n, |x, y| {
                let (x, y) = (inv[x], inv[y]);
                let s = ((x / b + y / b) % a) * b + (x % b + y % b) % b;
                perm[s]
            })
            .unwrap()
        })
}

fn skew(dim: usize) -> impl Strategy<Value = SkewAlgebra> {
    prop::collection::vec(-2.0f64..2.0, dim * dim * dim).prop_map(move |v| {
        let mut c = vec![0.0; dim * dim * dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let x = v[(k * dim + i) * dim + j];
                    c[(k * dim + i) * dim + j] = x;
                    c[(k * dim + j) * dim + i] = -x;
                }
            }
        }
        SkewAlgebra::new(dim, c).unwrap()
    })
}

fn kinetic(n: usize) -> ScalarFn {
    ScalarFn::Poly(Polynomial {
        terms: (0..n)
            .map(|i| Monomial {
                coeff: 0.5,
                exps: (0..n).map(|j| if i == j { 2 } else { 0 }).collect(),
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn octonion_norm_is_multiplicative(g in octonion(), h in octonion()) {
        let want = g.norm() * h.norm();
        prop_assert!(((g * h).norm() - want).abs() <= 1e-12 * want.max(1e-300));
    }

    #[test]
    fn octonion_moufang_and_alternative(x in unit_octonion(), y in unit_octonion(), z in unit_octonion()) {
        prop_assert!((z * (x * (z * y)) - ((z * x) * z) * y).max_abs() < 1e-12);
        prop_assert!(((x * x) * y - x * (x * y)).max_abs() < 1e-12);
        prop_assert!(((y * x) * x - y * (x * x)).max_abs() < 1e-12);
    }

    #[test]
    fn octonion_inverse_property(g in unit_octonion(), h in octonion()) {
        let gi = g.inverse().unwrap();
        prop_assert!((gi * (g * h) - h).max_abs() < 1e-12);
        prop_assert!(((h * g) * gi - h).max_abs() < 1e-12);
    }

    #[test]
    fn octonion_display_parses_back(g in octonion()) {
        let back: Octonion = g.to_string().parse().unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn abelian_groups_classify_consistently(t in relabelled_abelian()) {
        let rep = classify(&t, &ClassifyConfig::default()).unwrap();
        prop_assert!(rep.is_latin_square && rep.associative && rep.inverse_property);
        prop_assert!(rep.implication_chain_holds());
        for a in 0..t.order {
            for b in 0..t.order {
                let x = t.left_divide(a, b).unwrap();
                prop_assert_eq!(t.mul(a, x), b);
                let y = t.right_divide(a, b).unwrap();
                prop_assert_eq!(t.mul(y, a), b);
            }
        }
    }

    #[test]
    fn transversals_of_cyclic_groups_are_quotients(
        (n, d, shifts) in (1usize..5, 2usize..4).prop_flat_map(|(m, d)| {
            (Just(m * d), Just(d), prop::collection::vec(0usize..d, m))
        })
    ) {
        // H = <m> in Z_n has index m; coset r + H is represented by r + d_r * m
        let g = CayleyTable::cyclic(n);
        let m = n / d;
        let subgroup: Vec<usize> = (0..d).map(|k| k * m).collect();
        let mut s: Vec<usize> = (0..m).map(|r| (r + shifts[r] * m) % n).collect();
        s[0] = 0;
        let t = transversal_loop(&g, &subgroup, &s).unwrap();
        let rep = classify(&t, &ClassifyConfig::default()).unwrap();
        prop_assert!(rep.is_latin_square && rep.associative && rep.left_inverse_property);
        prop_assert_eq!(rep.unit, Some(0));
    }

    #[test]
    fn semidirect_by_units_keeps_inverse_property(n in 2usize..9) {
        let z = CayleyTable::cyclic(n);
        let units: Vec<usize> = (1..n).filter(|k| (1..=n).all(|p| !(k % p == 0 && n % p == 0) || p == 1)).collect();
        let autos: Vec<Vec<usize>> = units.iter().map(|k| (0..n).map(|x| x * k % n).collect()).collect();
        let sd = semidirect_loop(&z, &autos).unwrap();
        let rep = classify(&sd, &ClassifyConfig::default()).unwrap();
        prop_assert!(rep.is_latin_square && rep.inverse_property);
    }

    #[test]
    fn bracket_loop_round_trip(alg in (2usize..5).prop_flat_map(skew)) {
        let (_, back) = bracket_loop_of(alg.clone()).extract_structure_constants().unwrap();
        prop_assert!(back.max_abs_diff(&alg) < 1e-6);
    }

    #[test]
    fn division_solves_the_equation(a in prop::collection::vec(-0.4f64..0.4, 2), b in prop::collection::vec(-0.4f64..0.4, 2)) {
        let h = SmoothLoopChart::planar_h();
        let (a, b) = (Point::from_vec(a), Point::from_vec(b));
        let x = h.divide(Side::Left, &a, &b).unwrap();
        prop_assert!((h.eval_mul(&a, &x).unwrap() - &b).amax() < 1e-10);
        let y = h.divide(Side::Right, &a, &b).unwrap();
        prop_assert!((h.eval_mul(&y, &a).unwrap() - &b).amax() < 1e-10);
    }

    #[test]
    fn product_loopoid_anchors(seed in any::<u64>()) {
        let q = product_loopoid(&SmoothLoopChart::planar_h(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, h) = q.sample_pair(&mut rng).unwrap();
        let gh = q.multiply(&g, &h).unwrap();
        prop_assert!((q.alpha(&gh) - q.alpha(&g)).amax() < 1e-12);
        prop_assert!((q.beta(&gh) - q.beta(&h)).amax() < 1e-12);
    }

    #[test]
    fn floats_print_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(format_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_reads_back(rows in prop::collection::vec(prop::collection::vec("[a-z0-9,\" ]{0,6}", 3), 0..5)) {
        let mut t = CsvTable::new(["a", "b", "c"]);
        for r in &rows {
            t.push(r.clone());
        }
        let bytes = t.to_bytes().unwrap();
        prop_assert!(!bytes.contains(&b'\r'));
        let mut rd = csv::ReaderBuilder::new().from_reader(&bytes[..]);
        let back: Vec<Vec<String>> = rd.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn product_spec_round_trips(dim in 1usize..4, seed in proptest::option::of(any::<u64>()), which in 0usize..3) {
        let factor = ["planar_h", "cubic_line", "octonion"][which];
        let text = match seed {
            Some(s) => format!(r#"{{"kind":"loopoid","seed":{s},"body":{{"type":"product","dim":{dim},"loop":{{"type":"{factor}"}}}}}}"#),
            None => format!(r#"{{"kind":"loopoid","body":{{"type":"product","dim":{dim},"loop":{{"type":"{factor}"}}}}}}"#),
        };
        let spec = parse_spec(&text).unwrap();
        let canon = spec.to_canonical_json();
        let again = parse_spec(&canon).unwrap();
        prop_assert_eq!(&again, &spec);
        prop_assert_eq!(again.to_canonical_json(), canon);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The discrete Euler-Lagrange residual is F+L(g) - F-L(h).
    #[test]
    fn el_residual_is_legendre_difference(seed in any::<u64>()) {
        let q = product_loopoid(&SmoothLoopChart::planar_h(), 1);
        let sys = DiscreteLagrangianSystem::new(q, kinetic(4));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, h) = sys.loopoid.sample_pair(&mut rng).unwrap();
        let r = sys.el_residual(&g, &h).unwrap();
        let plus = sys.legendre(LegendreSide::Plus, &g).unwrap();
        let minus = sys.legendre(LegendreSide::Minus, &h).unwrap();
        let diff = DVector::from_iterator(r.len(), plus.components.iter().zip(minus.components.iter()).map(|(a, b)| a - b));
        prop_assert!((r - diff).amax() < 1e-7);
    }

    /// On the pair groupoid `T(u,v) . T(v,w) = T(u,w)`.
    #[test]
    fn pair_groupoid_tangent_product(
        u in -1.0f64..1.0, v in -1.0f64..1.0, w in -1.0f64..1.0,
        du in -1.0f64..1.0, dv in -1.0f64..1.0, dw in -1.0f64..1.0,
    ) {
        let q = pair_groupoid(1);
        let x = TangentElement::new(dvector![u, v], dvector![du, dv]).unwrap();
        let y = TangentElement::new(dvector![v, w], dvector![dv, dw]).unwrap();
        let p = tangent_multiply(&q, &x, &y).unwrap();
        prop_assert!((p.base - dvector![u, w]).amax() < 1e-12);
        prop_assert!((p.vector - dvector![du, dw]).amax() < 1e-8);
    }
}
