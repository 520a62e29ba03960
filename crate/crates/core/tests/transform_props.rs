use formal_fl::catalog::{build_case, build_variant, Bindings, CaseName, Variant};
use formal_fl::driver::{fourier_transform, DriverOptions, TransformReport};
use formal_fl::germ::{formal_decompose, q, slopes, swan, twist, DecomposeOptions, Point, Twist};
use formal_fl::local_fl::{
    legendre_exponent, normal_form_solver, numeric_local_fl, same_orbit, slope_one_rule, Direction, LocalNumerics,
    Location, Source,
};
use formal_fl::properties::random_supported_germ;
use formal_fl::scalar::Scalar;
use formal_fl::series::{LaurentSeries, PuiseuxSeries, RootTable};
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn nonzero() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        (1i64..=7, 1i64..=5, any::<bool>()).prop_map(|(n, d, neg)| Scalar::from_ratio(if neg { -n } else { n }, d)),
        (1i64..=3).prop_map(|k| Scalar::from_int(k) * Scalar::param("t")),
    ]
}

fn coeff() -> impl Strategy<Value = Scalar> {
    (-5i64..=5, 1i64..=4).prop_map(|(n, d)| Scalar::from_ratio(n, d))
}

fn twice(q0: &PuiseuxSeries) -> (PuiseuxSeries, RootTable) {
    let mut roots = RootTable::new();
    let var = q0.var().to_string();
    let (_, q1) = legendre_exponent(q0, Source::Infinity, &mut roots, 10).unwrap();
    let q1 = PuiseuxSeries::new(q1.ram(), q1.body().with_var(&var));
    let (_, q2) = legendre_exponent(&q1, Source::Infinity, &mut roots, 10).unwrap();
    (PuiseuxSeries::new(q2.ram(), q2.body().with_var(&var)), roots)
}

fn pure(slope: BigRational, mult: usize) -> LocalNumerics {
    LocalNumerics::from_slopes(vec![(slope, mult)]).unwrap()
}

fn report(name: CaseName, hat: u32, space: u32) -> TransformReport {
    let g = build_case(name, &Bindings::new()).unwrap();
    fourier_transform(&g, DriverOptions::with_truncation(hat, space, 1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decomposition_accounts_for_rank_and_swan(seed in any::<u64>()) {
        let g = random_supported_germ(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut roots = RootTable::new();
        let ft = formal_decompose(&g, &mut roots, DecomposeOptions::default()).unwrap();
        prop_assert_eq!(ft.rank(), g.rank());
        let weighted = ft.summands.iter().fold(BigRational::zero(), |acc, s| acc + s.slope() * BigRational::from_integer(s.rank.into()));
        prop_assert_eq!(weighted, BigRational::from_integer(swan(&g).unwrap().into()));
        let mut from_polygon = slopes(&g).unwrap();
        let mut from_summands = ft.slopes();
        from_polygon.sort();
        from_summands.sort();
        prop_assert_eq!(from_polygon, from_summands);
    }

    #[test]
    fn legendre_twice_is_the_sign_flip_slope_two(a in nonzero(), c in coeff()) {
        let q0 = PuiseuxSeries::from_laurent(LaurentSeries::new("w", [(-2, a), (-1, c)], None));
        let (q2, roots) = twice(&q0);
        prop_assert!(same_orbit(&q2, &q0, -1, &roots), "{} vs {}", q2, q0);
    }

    #[test]
    fn legendre_twice_is_the_sign_flip_slope_five_thirds(a in nonzero(), c in coeff(), e in coeff()) {
        let body = LaurentSeries::new("u", [(-5, a), (-2, c), (-1, e)], None);
        let q0 = PuiseuxSeries::new(3, body);
        let (q2, roots) = twice(&q0);
        prop_assert!(same_orbit(&q2, &q0, -1, &roots), "{} vs {}", q2, q0);
    }

    #[test]
    fn slope_one_without_residue(a in nonzero()) {
        let t = slope_one_rule(&a, &Scalar::zero()).unwrap();
        prop_assert_eq!(t.location, Location::Finite(-&a));
        prop_assert_eq!(t.summand.residues.clone(), vec![Some(Scalar::from_int(-1))]);
        prop_assert_eq!(t.summand.rank, 1);
    }

    #[test]
    fn numerics_bookkeeping(p in 1i64..=7, d in 1i64..=4, k in 1usize..=2) {
        let slope = BigRational::new(p.into(), d.into());
        let n = pure(slope.clone(), d as usize * k);
        let rank = n.rank as i64;
        let sw = n.swan as i64;
        if slope > BigRational::one() {
            let o = numeric_local_fl(Direction::InfToInfHat, &n).unwrap();
            prop_assert_eq!(o.rank as i64, sw - rank);
            prop_assert_eq!(o.swan, n.swan);
        } else {
            prop_assert!(numeric_local_fl(Direction::InfToInfHat, &n).map(|o| o.is_zero()).unwrap_or(true));
        }
        if slope < BigRational::one() {
            let o = numeric_local_fl(Direction::InfToZeroHat, &n).unwrap();
            prop_assert_eq!(o.rank as i64, rank - sw);
            prop_assert_eq!(o.swan, n.swan);
        }
        let z = numeric_local_fl(Direction::ZeroToInfHat, &n).unwrap();
        prop_assert_eq!(z.rank as i64, rank + sw);
        prop_assert_eq!(z.swan, n.swan);
    }
}

#[test]
fn twisting_by_a_slope_one_exponent() {
    let s = q(1, 1);
    let q0 = LaurentSeries::new("w", [(-1, Scalar::param("κ"))], None);
    for name in CaseName::ALL {
        let g = build_case(name, &Bindings::new()).unwrap();
        let inf = g.germ_at(&Point::Infinity).unwrap();
        let before = slopes(inf).unwrap();
        let after = slopes(&twist(inf, &Twist::Exponent(q0.clone())).unwrap()).unwrap();
        let mut want: Vec<(BigRational, usize)> = Vec::new();
        for (sl, m) in before {
            let sl = if sl > s { sl } else { s.clone() };
            match want.iter_mut().find(|(x, _)| *x == sl) {
                Some(e) => e.1 += m,
                None => want.push((sl, m)),
            }
        }
        want.sort();
        let mut after = after;
        after.sort();
        assert_eq!(after, want, "{name}");
    }
}

#[test]
fn solver_slopes_match_numeric_predictions() {
    for name in CaseName::ALL {
        let g = build_case(name, &Bindings::new()).unwrap();
        let inf = g.germ_at(&Point::Infinity).unwrap();
        let mut roots = RootTable::new();
        let ft = formal_decompose(inf, &mut roots, DecomposeOptions::default()).unwrap();
        let irregular: Vec<_> = ft.slopes().into_iter().filter(|(s, _)| *s > BigRational::one()).collect();
        let out = normal_form_solver(inf, 12).unwrap();
        if irregular.is_empty() {
            assert_eq!(out.dim(), 0, "{name}");
            continue;
        }
        let predicted = numeric_local_fl(Direction::InfToInfHat, &LocalNumerics::from_slopes(irregular).unwrap()).unwrap();
        let mut got = slopes(&out.as_germ(Point::Infinity).unwrap()).unwrap();
        let mut want = predicted.slopes.clone();
        got.sort();
        want.sort();
        assert_eq!(got, want, "{name}");
    }
}

#[test]
fn generic_diagonal_irregular_case_is_self_dual_numerically() {
    let g = build_variant(CaseName::JKTIVb, &Bindings::new(), Variant::Generic).unwrap();
    let inf = g.germ_at(&Point::Infinity).unwrap();
    let n = LocalNumerics::from_slopes(slopes(inf).unwrap()).unwrap();
    assert_eq!((n.rank, n.swan), (3, 6));
    let o = numeric_local_fl(Direction::InfToInfHat, &n).unwrap();
    assert_eq!((o.rank, o.swan), (3, 6));
    assert!(numeric_local_fl(Direction::InfToZeroHat, &n).map(|z| z.is_zero()).unwrap_or(true));
    assert_eq!(g.germs().len(), 1);
}

#[test]
fn raising_truncation_only_fills_unknowns() {
    for name in CaseName::ALL {
        let lo = report(name, 8, 16);
        let hi = report(name, 14, 28);
        assert_eq!(lo.rank_hat, hi.rank_hat, "{name}");
        assert_eq!(lo.location_keys(), hi.location_keys(), "{name}");
        for (a, b) in lo.points.iter().zip(&hi.points) {
            assert_eq!((a.regular, a.pole_order, a.summand_rank), (b.regular, b.pole_order, b.summand_rank), "{name}");
            assert_eq!(a.numerics, b.numerics, "{name}");
            for (sa, sb) in a.summands.iter().zip(&b.summands) {
                for (ra, rb) in sa.summand.residues.iter().zip(&sb.summand.residues) {
                    if let Some(ra) = ra {
                        assert_eq!(Some(ra), rb.as_ref(), "{name}");
                    }
                }
                let known = sa.summand.exponent.prec();
                let hi_trunc = match &known {
                    Some(p) => sb.summand.exponent.truncate(p),
                    None => sb.summand.exponent.clone(),
                };
                assert_eq!(sa.summand.exponent, hi_trunc, "{name}");
            }
            if let (Some(ma), Some(mb)) = (&a.matrix, &b.matrix) {
                for c in &ma.coeffs {
                    assert_eq!(mb.coeff(c.order), Some(&c.matrix), "{name} order {}", c.order);
                }
            }
        }
    }
}
