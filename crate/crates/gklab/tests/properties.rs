use gklab::field::io::fmt_num;
use gklab::geom::*;
use gklab::hopf::{j_closed_form, j_matrix, HopfParams};
use proptest::prelude::*;

fn form(rank: usize, c: &[f64]) -> AltForm {
    let len = basis(rank).len();
    AltForm::from_components(rank, &c[..len]).unwrap()
}

proptest! {
    #[test]
    fn j_is_a_compatible_complex_structure(p in -0.999f64..0.999, r in 0.05f64..1.0) {
        let j = j_matrix(1.0 + p, 1.0 - p, r).unwrap();
        let g = Metric4::diagonal([r * (1.0 + p) / 2.0, r * (1.0 + p) / 2.0, (1.0 - p) / (2.0 * r), (1.0 - p) / (2.0 * r)]);
        let scale = 1.0 + 1.0 / r;
        prop_assert!(j.complex_defect() < 1e-12 * scale * scale);
        prop_assert!(j.compat_defect(&g) < 1e-12 * scale);
        let i = Endo4::standard();
        prop_assert!((angle(&i, &j) - p).abs() < 1e-12 * scale);
        prop_assert!(((i.0 + j.0).determinant() - 4.0 * (1.0 + p).powi(2)).abs() < 1e-11 * scale);
        prop_assert!((j.0 - j_closed_form(p, 1.0 + p, 1.0 - p, r).0).amax() < 1e-12 * scale);
    }

    #[test]
    fn wedge_is_graded_commutative(a in prop::collection::vec(-2.0f64..2.0, 6), b in prop::collection::vec(-2.0f64..2.0, 6), k in 1usize..3) {
        let (x, y) = (form(k, &a), form(3 - k, &b));
        let xy = wedge(&x, &y).unwrap();
        let yx = wedge(&y, &x).unwrap();
        let sign = if (k * (3 - k)) % 2 == 0 { 1.0 } else { -1.0 };
        for (u, v) in xy.components().iter().zip(yx.components()) {
            prop_assert!((u - sign * v).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_is_an_antiderivation(x in prop::array::uniform4(-2.0f64..2.0), a in prop::array::uniform4(-2.0f64..2.0), b in prop::collection::vec(-2.0f64..2.0, 6)) {
        let v = Vec4::from(x);
        let (alpha, beta) = (AltForm::one(Vec4::from(a)), form(2, &b));
        let lhs = interior(&v, &wedge(&alpha, &beta).unwrap()).unwrap();
        let ia = interior(&v, &alpha).unwrap().components()[0];
        let rhs_b = interior(&v, &beta).unwrap();
        let rhs = wedge(&alpha, &rhs_b).unwrap();
        for (k, (l, r)) in lhs.components().iter().zip(rhs.components()).enumerate() {
            prop_assert!((l - (ia * beta.components()[k] - r)).abs() < 1e-11);
        }
    }

    #[test]
    fn numbers_round_trip(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let s = fmt_num(v);
        prop_assert_eq!(s.parse::<f64>().unwrap(), v);
        prop_assert!(!s.starts_with("-0.0000000000000000e0"));
    }

    #[test]
    fn parameter_domain(al in -0.5f64..1.5, be in -0.5f64..1.5) {
        let ok = al > 0.0 && al <= be && be < 1.0;
        prop_assert_eq!(HopfParams::new(al, be).is_ok(), ok);
        if ok {
            let r = HopfParams::new(al, be).unwrap().ratio();
            prop_assert!(r > 0.0 && r <= 1.0);
        }
    }
}
