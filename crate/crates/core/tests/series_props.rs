use formal_fl::scalar::Scalar;
use formal_fl::series::{puiseux_root, LaurentSeries, PuiseuxSeries, RootTable};
use proptest::prelude::*;

fn coeff() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        4 => (-6i64..=6, 1i64..=4).prop_map(|(n, d)| Scalar::from_ratio(n, d)),
        1 => (-3i64..=3).prop_map(|k| Scalar::from_int(k) * Scalar::param("b")),
    ]
}

/// A truncated Laurent series in `w` with a few known terms.
fn series() -> impl Strategy<Value = LaurentSeries> {
    (-3i64..=1, prop::collection::vec(coeff(), 1..6), 0i64..3).prop_map(|(low, cs, extra)| {
        let n = cs.len() as i64;
        LaurentSeries::new("w", cs.into_iter().enumerate().map(|(i, c)| (low + i as i64, c)), Some(low + n + extra))
    })
}

fn vanishes(s: &LaurentSeries, roots: &RootTable) -> bool {
    s.terms().all(|(_, c)| roots.reduce(c).is_zero_checked(5).unwrap())
}

fn agree(a: &LaurentSeries, b: &LaurentSeries) -> bool {
    vanishes(&a.try_sub(b).unwrap(), &RootTable::new())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn products_commute_and_associate(a in series(), b in series(), c in series()) {
        let ab = a.try_mul(&b).unwrap();
        prop_assert!(agree(&ab, &b.try_mul(&a).unwrap()));
        let l = ab.try_mul(&c).unwrap();
        let r = a.try_mul(&b.try_mul(&c).unwrap()).unwrap();
        prop_assert!(agree(&l, &r));
        prop_assert_eq!(l.prec(), r.prec());
    }

    #[test]
    fn nothing_reported_beyond_truncation(a in series(), b in series()) {
        let p = a.try_mul(&b).unwrap();
        let bound = p.prec().unwrap();
        prop_assert!(p.terms().all(|(k, _)| k < bound));
        let (va, vb) = (a.valuation(), b.valuation());
        if let (Some(va), Some(vb)) = (va, vb) {
            let want = (a.prec().unwrap() + vb).min(b.prec().unwrap() + va);
            prop_assert_eq!(bound, want);
        }
    }

    #[test]
    fn derivative_inverts_integral(a in series()) {
        let a = LaurentSeries::new("w", a.terms().filter(|(k, _)| *k != -1).map(|(k, c)| (k, c.clone())), a.prec());
        prop_assert!(agree(&a.integrate().unwrap().derive(), &a));
    }

    #[test]
    fn inverse_multiplies_to_one(a in series()) {
        prop_assume!(!a.is_zero());
        let inv = a.invert(8).unwrap();
        let one = a.try_mul(&inv).unwrap();
        prop_assert!(agree(&one, &LaurentSeries::one("w")));
    }

    #[test]
    fn roots_raise_back(c in coeff(), k in -5i64..=5, tail in prop::collection::vec(coeff(), 0..4), e in 2u32..=3) {
        prop_assume!(!c.is_zero());
        let mut terms = vec![(k, c.clone())];
        terms.extend(tail.into_iter().enumerate().map(|(i, t)| (k + 1 + i as i64, t * &c)));
        let a = PuiseuxSeries::from_laurent(LaurentSeries::new("w", terms, Some(k + 6)));
        let mut roots = RootTable::new();
        let r = puiseux_root(&a, e, &mut roots, 8).unwrap();
        let back = r.pow(e as i64, 8).unwrap();
        let diff = back.try_sub(&a).unwrap();
        prop_assert!(vanishes(diff.body(), &roots), "{} vs {}", back, a);
    }

    #[test]
    fn reversion_is_a_two_sided_inverse(c1 in coeff(), rest in prop::collection::vec(coeff(), 0..4)) {
        prop_assume!(!c1.is_zero());
        let terms = std::iter::once((1, c1)).chain(rest.into_iter().enumerate().map(|(i, c)| (2 + i as i64, c)));
        let a = LaurentSeries::new("z", terms, None);
        let r = a.reversion(7).unwrap();
        let z = LaurentSeries::monomial("z", Scalar::one(), 1);
        prop_assert!(agree(&a.compose(&r, 7).unwrap(), &z));
        prop_assert!(agree(&r.compose(&a, 7).unwrap(), &z));
    }
}
