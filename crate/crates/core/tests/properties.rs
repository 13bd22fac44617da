use proptest::prelude::*;

use kahler_dirichlet::curvature::{fmt17, sectional};
use kahler_dirichlet::kahler::{laplacian, random_potential, random_tangent};
use kahler_dirichlet::metrics::{gram_schmidt, inner, MetricKind};
use kahler_dirichlet::spectral::{build_spec, complex_hessian, random_field};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fmt17_round_trips(x in proptest::num::f64::NORMAL) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn random_fields_are_reproducible(seed in any::<u64>()) {
        let s = build_spec(1, 16).unwrap();
        let a = random_field(&s, seed, 3.0);
        let b = random_field(&s, seed, 3.0);
        prop_assert_eq!(a.values(), b.values());
        prop_assert!(a.mean().abs() < 1e-12);
    }

    #[test]
    fn hessian_is_linear(seed in any::<u64>(), c in -3.0f64..3.0) {
        let s = build_spec(1, 16).unwrap();
        let f = random_field(&s, seed, 3.0);
        let h = random_field(&s, seed ^ 1, 3.0);
        let lhs = complex_hessian(&s, &f.axpy(c, &h));
        let a = complex_hessian(&s, &f);
        let b = complex_hessian(&s, &h);
        for node in 0..s.len() {
            let want = a.at(0, 0, node) + b.at(0, 0, node) * c;
            prop_assert!((lhs.at(0, 0, node) - want).norm() <= 1e-12 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn laplacian_integrates_to_zero(seed in any::<u64>(), amp in 0.0f64..0.4) {
        let s = build_spec(1, 16).unwrap();
        let p = random_potential(&s, seed, amp).unwrap();
        let f = random_field(&s, seed ^ 7, 3.0);
        prop_assert!(p.integrate(&laplacian(&p, &f)).abs() <= 1e-10);
    }

    #[test]
    fn calabi_and_mabuchi_signs(seed in any::<u64>(), amp in 0.0f64..0.4) {
        let s = build_spec(1, 16).unwrap();
        let p = random_potential(&s, seed, amp).unwrap();
        let x = random_tangent(&p, seed ^ 3, 0.3);
        let y = random_tangent(&p, seed ^ 5, 0.3);
        prop_assert_eq!(sectional(MetricKind::Calabi, &p, &x, &y).unwrap().value, 0.25);
        prop_assert!(sectional(MetricKind::Mabuchi, &p, &x, &y).unwrap().value <= 1e-12);
        prop_assert_eq!(sectional(MetricKind::Dirichlet, &p, &x, &y).unwrap().value, 0.0);
    }

    #[test]
    fn gram_schmidt_orthonormalizes(seed in any::<u64>()) {
        let s = build_spec(1, 16).unwrap();
        let p = random_potential(&s, seed, 0.3).unwrap();
        let v = [random_tangent(&p, seed ^ 11, 0.3), random_tangent(&p, seed ^ 13, 0.3)];
        for kind in MetricKind::ALL {
            let e = gram_schmidt(kind, &p, &v).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let g = inner(kind, &p, &e[i], &e[j]).unwrap();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((g - want).abs() <= 1e-10, "{} {} {} {}", kind.name(), i, j, g);
                }
            }
        }
    }
}
