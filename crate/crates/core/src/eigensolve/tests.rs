use std::f64::consts::PI;

use super::*;
use crate::coeffs::{make_coefficients, CoefficientFamily};
use crate::discretization::{p_mass, rayleigh};

fn identity() -> CoefficientField {
    make_coefficients(&CoefficientFamily::Identity, None).unwrap()
}

#[test]
fn cross_section_p2_approaches_pi_squared() {
    let cross = cross_section_ground_state(64, &identity(), 2.0).unwrap();
    assert!(cross.converged);
    assert!((cross.mu1 - PI * PI).abs() < 5e-3);
    assert!((cross.poincare_cp - 1.0 / PI).abs() < 1e-4);
    let n = cross.nx2();
    assert_eq!(cross.w()[0], 0.0);
    assert_eq!(cross.w()[n], 0.0);
    assert!(cross.w()[1..n].iter().all(|&v| v > 0.0));
    // symmetric about the midpoint
    for j in 0..=n {
        assert!((cross.w()[j] - cross.w()[n - j]).abs() < 1e-9);
    }
}

#[test]
fn cross_section_rejects_coarse_grid() {
    assert!(matches!(
        cross_section_ground_state(4, &identity(), 2.0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn mixed_identity_matches_cross_section() {
    for p in [2.0, 3.0] {
        let mesh = build_mesh(DomainSpec::full(2.0, BoundaryKind::Mixed, 4, 16)).unwrap();
        let cross = cross_section_ground_state(16, &identity(), p).unwrap();
        let res = minimize_rayleigh(&mesh, &identity(), p, &SolveOptions::default()).unwrap();
        assert!((res.lambda - cross.mu1).abs() < 1e-8 * cross.mu1, "p={p}");
    }
}

#[test]
fn dirichlet_identity_is_close_to_separable_oracle() {
    let mesh = build_mesh(DomainSpec::full(2.0, BoundaryKind::DirichletAll, 8, 32)).unwrap();
    let res = minimize_rayleigh(&mesh, &identity(), 2.0, &SolveOptions::default()).unwrap();
    let oracle = PI * PI + (PI / 4.0).powi(2);
    assert!(res.converged);
    assert!((res.lambda - oracle).abs() < 0.01 * oracle);
}

#[test]
fn result_invariants_hold() {
    let coeffs = make_coefficients(&CoefficientFamily::ConstantOffDiag(0.3), None).unwrap();
    let mesh = build_mesh(DomainSpec::full(2.0, BoundaryKind::Mixed, 4, 16)).unwrap();
    let opts = SolveOptions::default();
    let res = minimize_rayleigh(&mesh, &coeffs, 3.0, &opts).unwrap();
    let quad = QuadratureRule::default();
    let (m, _) = p_mass(&mesh, &res.field, 3.0, &quad).unwrap();
    assert!((m - 1.0).abs() < 1e-10);
    let r = rayleigh(&mesh, &coeffs, &res.field, 3.0, &quad).unwrap();
    assert!((r - res.lambda).abs() < 1e-12 * r);
    assert!(res.rayleigh_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(res.field.values.iter().all(|&v| v >= 0.0));
}

#[test]
fn linear_spectrum_agrees_with_descent() {
    let coeffs = make_coefficients(&CoefficientFamily::ConstantOffDiag(0.3), None).unwrap();
    let mesh = build_mesh(DomainSpec::full(2.0, BoundaryKind::Mixed, 4, 16)).unwrap();
    let opts = SolveOptions::default();
    let spec = linear_spectrum(&mesh, &coeffs, 3, &opts).unwrap();
    let first = minimize_rayleigh(&mesh, &coeffs, 2.0, &opts).unwrap();
    assert!((spec[0].lambda - first.lambda).abs() < 1e-7);
    assert!(spec.windows(2).all(|w| w[0].lambda <= w[1].lambda));
    assert!(spec.iter().all(|r| r.converged));
}

#[test]
fn linear_spectrum_rejects_bad_count() {
    let mesh = build_mesh(DomainSpec::full(1.0, BoundaryKind::Mixed, 4, 4)).unwrap();
    assert!(linear_spectrum(&mesh, &identity(), 0, &SolveOptions::default()).is_err());
    let n = mesh.free_dofs();
    assert!(linear_spectrum(&mesh, &identity(), n + 1, &SolveOptions::default()).is_err());
}

#[test]
fn half_cylinder_quarter_wave() {
    let res = Resolution {
        nx2: 32,
        cells_per_unit: 8,
    };
    let (_, plus) = half_cylinder_eigen(
        Side::Plus,
        2.0,
        res,
        &identity(),
        2.0,
        &SolveOptions::default(),
    )
    .unwrap();
    let oracle = PI * PI + (PI / 4.0).powi(2);
    assert!((plus.lambda - oracle).abs() < 0.01 * oracle);
}

#[test]
fn reflection_swaps_half_cylinders() {
    let coeffs = make_coefficients(&CoefficientFamily::LinearOffDiag(0.8), None).unwrap();
    let res = Resolution {
        nx2: 16,
        cells_per_unit: 4,
    };
    let opts = SolveOptions::default();
    let (_, minus) = half_cylinder_eigen(Side::Minus, 2.0, res, &coeffs, 2.0, &opts).unwrap();
    let (_, plus) =
        half_cylinder_eigen(Side::Plus, 2.0, res, &coeffs.reflect_axis(), 2.0, &opts).unwrap();
    assert!((minus.lambda - plus.lambda).abs() < 1e-8);
}

#[test]
fn solves_are_deterministic() {
    let coeffs = make_coefficients(&CoefficientFamily::ConstantOffDiag(0.3), None).unwrap();
    let mesh = build_mesh(DomainSpec::full(2.0, BoundaryKind::Mixed, 4, 8)).unwrap();
    let opts = SolveOptions {
        init: Init::PerturbedLift,
        seed: 7,
        ..SolveOptions::default()
    };
    let a = minimize_rayleigh(&mesh, &coeffs, 2.5, &opts).unwrap();
    let b = minimize_rayleigh(&mesh, &coeffs, 2.5, &opts).unwrap();
    assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
    assert_eq!(a.field.values, b.field.values);
}
