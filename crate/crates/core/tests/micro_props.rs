use formal_fl::micro::{anti_involution, Chart, MicroOperator, Window, WeylChart, WeylOperator};
use formal_fl::scalar::Scalar;
use formal_fl::series::LaurentSeries;
use proptest::prelude::*;

const WIN: Window = Window { hat: 9, space: 18 };

fn coeff() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        4 => (-5i64..=5, 1i64..=3).prop_map(|(n, d)| Scalar::from_ratio(n, d)),
        1 => (1i64..=2).prop_map(|k| Scalar::from_int(k) * Scalar::param("λ")),
    ]
}

fn chart() -> impl Strategy<Value = Chart> {
    prop_oneof![Just(Chart::E0), Just(Chart::EInf)]
}

fn micro(chart: Chart) -> impl Strategy<Value = MicroOperator> {
    let lo = if chart == Chart::E0 { 0 } else { -2 };
    prop::collection::vec((coeff(), lo..=3i64, -1i64..=2), 1..4).prop_map(move |ts| {
        ts.into_iter().fold(MicroOperator::zero(chart), |acc, (c, sp, h)| acc.add(&MicroOperator::term(chart, c, sp, h)).unwrap())
    })
}

fn triple() -> impl Strategy<Value = (MicroOperator, MicroOperator, MicroOperator)> {
    chart().prop_flat_map(|c| (micro(c), micro(c), micro(c)))
}

fn polynomial() -> impl Strategy<Value = LaurentSeries> {
    prop::collection::vec(coeff(), 1..=7)
        .prop_map(|cs| LaurentSeries::new("z", cs.into_iter().enumerate().map(|(i, c)| (i as i64, c)), None))
}

fn weyl() -> impl Strategy<Value = WeylOperator> {
    prop::collection::vec((coeff(), 0u32..=2, 0u32..=2), 1..4).prop_map(|ts| {
        ts.into_iter().fold(WeylOperator::zero(WeylChart::Z), |acc, (c, a, b)| acc.add(&WeylOperator::term(WeylChart::Z, c, a, b)))
    })
}

fn sign_flip(a: &WeylOperator) -> WeylOperator {
    a.terms().fold(WeylOperator::zero(a.chart()), |acc, ((i, j), c)| {
        let c = if (i + j) % 2 == 0 { c.clone() } else { -c };
        acc.add(&WeylOperator::term(a.chart(), c, i, j))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn products_associate((a, b, c) in triple()) {
        let l = a.mul(&b, WIN).unwrap().mul(&c, WIN).unwrap();
        let r = a.mul(&b.mul(&c, WIN).unwrap(), WIN).unwrap();
        prop_assert!(l.agrees_with(&r));
    }

    #[test]
    fn hat_times_function_expands_by_derivatives(a in polynomial()) {
        let what = MicroOperator::term(Chart::E0, Scalar::one(), 0, 1);
        let got = what.mul(&MicroOperator::from_series(Chart::E0, &a), WIN).unwrap();
        let mut want = MicroOperator::zero(Chart::E0);
        let mut der = a.clone();
        for k in 0..8i64 {
            for (j, c) in der.terms() {
                let c = if k % 2 == 0 { c.clone() } else { -c };
                want = want.add(&MicroOperator::term(Chart::E0, c, j, k + 1)).unwrap();
            }
            der = der.derive();
        }
        prop_assert!(got.agrees_with(&want));
        // ∂_z undoes the multiplication by ŵ.
        let back = MicroOperator::d_space(Chart::E0).mul(&got, WIN).unwrap();
        prop_assert!(back.agrees_with(&MicroOperator::from_series(Chart::E0, &a)));
    }

    #[test]
    fn inverses_are_two_sided(c in chart(), tail in prop::collection::vec((coeff(), -1i64..=2), 0..3)) {
        let a = tail.into_iter().fold(MicroOperator::d_space(c), |acc, (k, e)| {
            let e = if c == Chart::EInf { e - 2 } else { e };
            acc.add(&MicroOperator::term(c, k, e, 0)).unwrap()
        });
        let inv = a.invert(WIN).unwrap();
        prop_assert!(a.mul(&inv, WIN).unwrap().agrees_with(&MicroOperator::one(c)));
        prop_assert!(inv.mul(&a, WIN).unwrap().agrees_with(&MicroOperator::one(c)));
    }

    #[test]
    fn weyl_products_associate(a in weyl(), b in weyl(), c in weyl()) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
    }

    // The map is multiplicative, not order-reversing; see the acceptance run
    // for the literal reversal law.
    #[test]
    fn fourier_map_is_multiplicative_and_squares_to_sign_flip(a in weyl(), b in weyl()) {
        prop_assert_eq!(anti_involution(&a.mul(&b)), anti_involution(&a).mul(&anti_involution(&b)));
        prop_assert_eq!(anti_involution(&anti_involution(&a)), sign_flip(&a));
    }
}
