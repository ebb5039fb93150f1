use proptest::prelude::*;

use cylspectra::asymptotics::{fit_decay, geometric_limit, SlabProfile, SlabRecord};
use cylspectra::discretization::{energy, gradient_p_norm, p_mass, rayleigh};
use cylspectra::{
    build_mesh, make_coefficients, minimize_rayleigh, BoundaryKind, CoefficientFamily,
    CylinderMesh, DiscreteField, DomainSpec, QuadratureRule, SolveOptions,
};

fn mesh() -> CylinderMesh {
    build_mesh(DomainSpec::full(1.0, BoundaryKind::Mixed, 3, 6)).unwrap()
}

fn family() -> impl Strategy<Value = CoefficientFamily> {
    prop_oneof![
        Just(CoefficientFamily::Identity),
        (-0.9f64..0.9).prop_map(CoefficientFamily::ConstantOffDiag),
        (-1.5f64..1.5).prop_map(CoefficientFamily::LinearOffDiag),
    ]
}

fn field(m: &CylinderMesh) -> impl Strategy<Value = DiscreteField> {
    let m = m.clone();
    prop::collection::vec(-1.0f64..1.0, m.free_dofs())
        .prop_map(move |v| DiscreteField::from_values(&m, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_homogeneous(fam in family(), p in 2.0f64..4.0, t in 0.1f64..3.0, u in field(&mesh())) {
        let m = mesh();
        let a = make_coefficients(&fam, None).unwrap();
        let q = QuadratureRule::default();
        let e = energy(&m, &a, &u, p, &q).unwrap();
        let et = energy(&m, &a, &u.scaled(t), p, &q).unwrap();
        prop_assert!((et - t.powf(p) * e).abs() <= 1e-10 * et.max(1e-300));
        let (mass, _) = p_mass(&m, &u, p, &q).unwrap();
        let (mt, _) = p_mass(&m, &u.scaled(-t), p, &q).unwrap();
        prop_assert!((mt - t.powf(p) * mass).abs() <= 1e-10 * mt.max(1e-300));
    }

    #[test]
    fn quotient_is_scale_invariant(fam in family(), p in 2.0f64..4.0, t in 0.1f64..3.0, u in field(&mesh())) {
        let m = mesh();
        let a = make_coefficients(&fam, None).unwrap();
        let q = QuadratureRule::default();
        let r = rayleigh(&m, &a, &u, p, &q).unwrap();
        let rt = rayleigh(&m, &a, &u.scaled(-t), p, &q).unwrap();
        prop_assert!((r - rt).abs() <= 1e-10 * r);
    }

    #[test]
    fn ellipticity_bounds_energy(fam in family(), p in 2.0f64..4.0, u in field(&mesh())) {
        let m = mesh();
        let a = make_coefficients(&fam, None).unwrap();
        let e = energy(&m, &a, &u, p, &QuadratureRule::default()).unwrap();
        let g = gradient_p_norm(&m, &u, p).unwrap();
        prop_assert!(e >= a.lambda_margin().powf(p / 2.0) * g * (1.0 - 1e-12));
        prop_assert!(e <= a.sup_norm().powf(p / 2.0) * g * (1.0 + 1e-12));
    }

    #[test]
    fn reflection_is_an_involution(fam in family(), x2 in -0.5f64..0.5) {
        let a = make_coefficients(&fam, None).unwrap();
        let r = a.reflect_axis();
        let [a11, a12, a22] = a.at(x2);
        prop_assert_eq!(r.at(x2), [a11, -a12, a22]);
        prop_assert_eq!(r.reflect_axis().at(x2), a.at(x2));
        prop_assert_eq!(r.lambda_margin(), a.lambda_margin());
    }

    #[test]
    fn decay_fit_recovers_geometric_ratio(alpha in 0.05f64..0.99, scale in 1e-3f64..1e3, n in 12usize..40) {
        let records = (0..n)
            .map(|j| {
                let v = scale * alpha.powi(j as i32);
                SlabRecord { index: j, x1_left: j as f64, x1_right: j as f64 + 1.0, grad_energy: v, energy: v, p_mass: v }
            })
            .collect();
        let fit = fit_decay(&SlabProfile { records }, None).unwrap();
        prop_assert!((fit.alpha_hat - alpha).abs() <= 1e-9 * alpha);
        prop_assert!(fit.r_squared >= 1.0 - 1e-9 && fit.r_squared <= 1.0);
        prop_assert!(fit.alpha_hat > 0.0);
    }

    #[test]
    fn aitken_recovers_limit(nu in 1.0f64..50.0, c in 0.01f64..5.0, rho in 0.1f64..0.95, l0 in 1.0f64..4.0, h in 1.0f64..4.0, h2 in 1.0f64..4.0) {
        let pts: Vec<(f64, f64)> = [l0, l0 + h, l0 + h + h2].iter().map(|&l| (l, nu + c * rho.powf(l))).collect();
        let est = geometric_limit(&pts).unwrap();
        prop_assert!((est - nu).abs() <= 1e-7 * nu.max(c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn descent_invariants(fam in family(), p in prop::sample::select(vec![2.0, 2.5, 3.0])) {
        let m = build_mesh(DomainSpec::full(1.5, BoundaryKind::Mixed, 4, 8)).unwrap();
        let a = make_coefficients(&fam, None).unwrap();
        let r = minimize_rayleigh(&m, &a, p, &SolveOptions::default()).unwrap();
        let q = QuadratureRule::default();
        let (mass, _) = p_mass(&m, &r.field, p, &q).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-10);
        prop_assert!(r.rayleigh_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*r.rayleigh_history.last().unwrap(), r.lambda);
        let direct = rayleigh(&m, &a, &r.field, p, &q).unwrap();
        prop_assert!((direct - r.lambda).abs() <= 1e-9 * r.lambda);
        prop_assert!(r.field.values.iter().all(|v| *v >= 0.0));
        prop_assert!(r.converged);
    }
}
