use std::f64::consts::PI;

use cylspectra::asymptotics::{
    beta2_upper_bound, end_mass_split, exp_test_upper_bound, family_field, fit_decay,
    gap_integral_i2, geometric_limit, nu_infinity_estimate, picone_residual_min,
    poincare_lower_bound, slab_bound, sweep_lambda, translate_distance, SlabBoundVariant,
    SlabProfile, SlabRecord, SweepTable,
};
use cylspectra::discretization::lift_cross_section;
use cylspectra::{
    build_mesh, cross_section_ground_state, half_cylinder_eigen, minimize_rayleigh, BoundaryKind,
    CoefficientFamily, CoefficientField, CrossSectionResult, CylinderMesh, DiscreteField,
    DomainSpec, Error, Resolution, Shape, Side, SolveOptions,
};

const SMALL: Resolution = Resolution {
    nx2: 16,
    cells_per_unit: 4,
};
const DESK: Resolution = Resolution {
    nx2: 64,
    cells_per_unit: 8,
};

fn profile(values: &[f64]) -> SlabProfile {
    let n = values.len() as f64;
    SlabProfile {
        records: values
            .iter()
            .enumerate()
            .map(|(index, &v)| SlabRecord {
                index,
                x1_left: index as f64 - n / 2.0,
                x1_right: index as f64 + 1.0 - n / 2.0,
                grad_energy: v,
                energy: v,
                p_mass: v,
            })
            .collect(),
    }
}

fn coeffs(family: CoefficientFamily, nx2: usize, p: f64) -> (CoefficientField, CrossSectionResult) {
    let field = family_field(&family, nx2, p).unwrap();
    let cross = cross_section_ground_state(nx2, &field, p).unwrap();
    (field, cross)
}

fn mixed(ell: f64, res: Resolution) -> CylinderMesh {
    build_mesh(DomainSpec::full(
        ell,
        BoundaryKind::Mixed,
        res.cells_per_unit,
        res.nx2,
    ))
    .unwrap()
}

#[test]
fn geometric_profile_recovers_ratio() {
    // left end dominant: 0.5^d away from it, mirrored tail kept tiny
    let values: Vec<f64> = (0..24).map(|j| 0.5f64.powi(j)).collect();
    let fit = fit_decay(&profile(&values), None).unwrap();
    assert!(fit.from_left);
    assert_eq!(fit.window, (2, 10));
    assert!((fit.alpha_hat - 0.5).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    assert!(!fit.no_decay);

    let mirrored: Vec<f64> = values.iter().rev().copied().collect();
    let fit = fit_decay(&profile(&mirrored), None).unwrap();
    assert!(!fit.from_left);
    assert!((fit.alpha_hat - 0.5).abs() < 1e-12);
}

#[test]
fn flat_profile_is_flagged() {
    let fit = fit_decay(&profile(&[3.0; 16]), None).unwrap();
    assert!((fit.alpha_hat - 1.0).abs() < 1e-12);
    assert_eq!(fit.r_squared, 1.0);
    assert!(fit.no_decay);
}

#[test]
fn decay_fit_errors() {
    let mut values = vec![1.0; 16];
    values[3] = 0.0;
    values[12] = 0.0;
    assert!(matches!(
        fit_decay(&profile(&values), None),
        Err(Error::Fit(_))
    ));
    assert!(matches!(
        fit_decay(&profile(&[1.0; 8]), None),
        Err(Error::Precondition(_))
    ));
    assert!(fit_decay(&profile(&[1.0; 8]), Some((0, 3))).is_ok());
}

#[test]
fn geometric_limit_is_exact_on_geometric_tails() {
    let seq = |nu: f64, c: f64, rho: f64, ls: &[f64]| -> Vec<(f64, f64)> {
        ls.iter().map(|&l| (l, nu + c * rho.powf(l))).collect()
    };
    let equal = seq(9.8, 2.0, 0.7, &[4.0, 8.0, 12.0]);
    assert!((geometric_limit(&equal).unwrap() - 9.8).abs() < 1e-12);
    let unequal = seq(9.8, 2.0, 0.7, &[2.0, 4.0, 8.0]);
    assert!((geometric_limit(&unequal).unwrap() - 9.8).abs() < 1e-10);
    let growing = seq(9.8, -2.0, 1.3, &[4.0, 8.0, 12.0]);
    assert!(geometric_limit(&growing).is_none());
    assert!(geometric_limit(&equal[..2]).is_none());
}

#[test]
fn identity_ladder_extrapolates_to_cross_section() {
    let (field, cross) = coeffs(CoefficientFamily::Identity, SMALL.nx2, 2.0);
    // the decoupled tail is (π/2ℓ)^2, so the rungs must be long
    let est = nu_infinity_estimate(
        Side::Plus,
        &field,
        2.0,
        &[8.0, 16.0, 24.0],
        SMALL,
        &SolveOptions::default(),
    )
    .unwrap();
    assert!(est.monotone_ok && est.converged);
    assert!(est.extrapolated <= est.last_value);
    assert!((est.extrapolated - cross.mu1).abs() < 1e-3 * cross.mu1);
    let short = nu_infinity_estimate(
        Side::Plus,
        &field,
        2.0,
        &[2.0, 4.0],
        SMALL,
        &SolveOptions::default(),
    );
    assert!(matches!(short, Err(Error::Precondition(_))));
}

#[test]
fn gap_integral_cases() {
    let (id, cross) = coeffs(CoefficientFamily::Identity, DESK.nx2, 2.0);
    let g = gap_integral_i2(&cross, &id, 2.0);
    assert_eq!(g.value, 0.0);
    assert!(g.coupling_vanishes);

    let (co, cross) = coeffs(CoefficientFamily::ConstantOffDiag(0.3), DESK.nx2, 3.0);
    let g = gap_integral_i2(&cross, &co, 3.0);
    assert!(g.value.abs() < 1e-12);
    assert!(!g.coupling_vanishes);

    // c ∫ (W')^2 W with W' the elementwise slope
    let c = 0.1;
    let (ga, cross) = coeffs(CoefficientFamily::GradAligned(c), DESK.nx2, 2.0);
    let g = gap_integral_i2(&cross, &ga, 2.0);
    let w = cross.w();
    let oracle: f64 = (0..cross.nx2())
        .map(|e| {
            let h = cross.nodes()[e + 1] - cross.nodes()[e];
            let s = (w[e + 1] - w[e]) / h;
            c * s * s * h * 0.5 * (w[e] + w[e + 1])
        })
        .sum();
    assert!(g.value > 0.0);
    assert!(!g.coupling_vanishes);
    assert!(
        (g.value - oracle).abs() < 0.02 * oracle,
        "{} vs {oracle}",
        g.value
    );
}

#[test]
fn exponential_test_function() {
    let (id, cross) = coeffs(CoefficientFamily::Identity, DESK.nx2, 2.0);
    let eps = 0.1;
    let v = exp_test_upper_bound(eps, &cross, &id, 2.0, 100.0).unwrap();
    assert!((v - (cross.mu1 + eps * eps)).abs() < 1e-10);
    assert!((v - (PI * PI + eps * eps)).abs() < 5e-3);
    assert!(matches!(
        exp_test_upper_bound(eps, &cross, &id, 2.0, 50.0),
        Err(Error::Precondition(_))
    ));
    assert!(matches!(
        exp_test_upper_bound(0.0, &cross, &id, 2.0, 100.0),
        Err(Error::Precondition(_))
    ));

    for family in [
        CoefficientFamily::ConstantOffDiag(0.3),
        CoefficientFamily::LinearOffDiag(0.8),
    ] {
        for p in [2.0, 3.0] {
            let (f, cross) = coeffs(family.clone(), DESK.nx2, p);
            let v = exp_test_upper_bound(0.01, &cross, &f, p, 1000.0).unwrap();
            assert!(
                (v - cross.mu1).abs() < 0.02 * cross.mu1,
                "{family:?} p={p}: {v}"
            );
        }
    }
}

#[test]
fn exponential_bound_dominates_half_cylinder_limit() {
    let (co, cross) = coeffs(CoefficientFamily::ConstantOffDiag(0.3), DESK.nx2, 2.0);
    let est = nu_infinity_estimate(
        Side::Plus,
        &co,
        2.0,
        &[4.0, 8.0, 12.0],
        DESK,
        &SolveOptions::default(),
    )
    .unwrap();
    for eps in [0.01, 0.05, 0.1, 0.3] {
        let v = exp_test_upper_bound(eps, &cross, &co, 2.0, 20.0 / eps).unwrap();
        assert!(
            v >= est.extrapolated,
            "eps {eps}: {v} < {}",
            est.extrapolated
        );
    }
    assert!(poincare_lower_bound(&cross, &co) <= est.extrapolated);
}

#[test]
fn poincare_bound_is_below_eigenvalues() {
    for (family, p) in [
        (CoefficientFamily::Identity, 2.0),
        (CoefficientFamily::ConstantOffDiag(0.3), 3.0),
        (CoefficientFamily::LinearOffDiag(0.8), 2.0),
    ] {
        let (f, cross) = coeffs(family, SMALL.nx2, p);
        let r = minimize_rayleigh(&mixed(3.0, SMALL), &f, p, &SolveOptions::default()).unwrap();
        let lower = poincare_lower_bound(&cross, &f);
        assert!(
            lower > 0.0 && lower <= r.lambda * (1.0 + 1e-12),
            "{lower} vs {}",
            r.lambda
        );
    }
}

#[test]
fn slab_bound_variants() {
    for p in [2.0, 3.0] {
        let (id, cross) = coeffs(CoefficientFamily::Identity, DESK.nx2, p);
        for variant in [SlabBoundVariant::AsPrinted, SlabBoundVariant::Squared] {
            let b = slab_bound(&cross, &id, p, variant);
            assert!((b.value - cross.mu1).abs() < 1e-9 * cross.mu1);
            assert_eq!(b.clamped, 0);
        }
    }

    let c = 0.1;
    let (ga, cross) = coeffs(CoefficientFamily::GradAligned(c), DESK.nx2, 2.0);
    let b = slab_bound(&cross, &ga, 2.0, SlabBoundVariant::Squared);
    let w = cross.w();
    let quartic: f64 = (0..cross.nx2())
        .map(|e| {
            let h = cross.nodes()[e + 1] - cross.nodes()[e];
            ((w[e + 1] - w[e]) / h).powi(4) * h
        })
        .sum();
    let oracle = cross.mu1 - c * c * quartic;
    assert!(b.value < cross.mu1);
    assert!(
        (b.value - oracle).abs() < 2e-3 * cross.mu1,
        "{} vs {oracle}",
        b.value
    );

    let (co, cross) = coeffs(CoefficientFamily::ConstantOffDiag(0.3), DESK.nx2, 3.0);
    assert!(slab_bound(&cross, &co, 3.0, SlabBoundVariant::Squared).value < cross.mu1);
    // the printed form is negative near the crest of W, where W' is small
    let (big, cross) = coeffs(CoefficientFamily::ConstantOffDiag(0.9), DESK.nx2, 2.0);
    assert!(slab_bound(&cross, &big, 2.0, SlabBoundVariant::AsPrinted).clamped > 0);
}

#[test]
fn beta2_quarter_wave_and_symmetry() {
    let (id, _) = coeffs(CoefficientFamily::Identity, DESK.nx2, 2.0);
    let b = beta2_upper_bound(2.0, DESK, &id, 2.0, &SolveOptions::default()).unwrap();
    let oracle = PI * PI + (PI / 4.0).powi(2);
    assert!((b.value - oracle).abs() < 5e-3 * oracle);
    assert!(b.converged);

    let (co, _) = coeffs(CoefficientFamily::ConstantOffDiag(0.3), SMALL.nx2, 2.0);
    let b = beta2_upper_bound(3.0, SMALL, &co, 2.0, &SolveOptions::default()).unwrap();
    assert!((b.plus - b.minus).abs() < 1e-7);
}

#[test]
fn picone_equality_cases() {
    for p in [2.0, 3.0] {
        let (f, cross) = coeffs(CoefficientFamily::LinearOffDiag(0.8), SMALL.nx2, p);
        let mesh = mixed(2.0, SMALL);
        let lifted = lift_cross_section(&cross, &mesh).unwrap();
        for scale in [1.0, 2.0] {
            let r = picone_residual_min(&lifted.scaled(scale), &cross, &mesh, &f, p, None).unwrap();
            assert!(r.points > 0);
            assert!(r.min_relative.abs() < 1e-12, "{}", r.min_relative);
        }
        let negative = lifted.scaled(-1.0);
        assert!(matches!(
            picone_residual_min(&negative, &cross, &mesh, &f, p, None),
            Err(Error::Precondition(_))
        ));
    }
}

#[test]
fn picone_holds_for_minimizer() {
    let (id, cross) = coeffs(CoefficientFamily::Identity, SMALL.nx2, 2.0);
    let mesh = mixed(2.0, SMALL);
    let opts = SolveOptions {
        init: cylspectra::Init::Ones,
        ..SolveOptions::default()
    };
    let r = minimize_rayleigh(&mesh, &id, 2.0, &opts).unwrap();
    let res = picone_residual_min(&r.field, &cross, &mesh, &id, 2.0, None).unwrap();
    assert!(res.min_relative >= -1e-10);
}

#[test]
fn end_split_identities() {
    let opts = SolveOptions::default();
    for (family, p) in [
        (CoefficientFamily::ConstantOffDiag(0.3), 2.0),
        (CoefficientFamily::LinearOffDiag(0.8), 3.0),
    ] {
        let (f, _) = coeffs(family.clone(), SMALL.nx2, p);
        let mesh = mixed(3.0, SMALL);
        let r = minimize_rayleigh(&mesh, &f, p, &opts).unwrap();
        let s = end_mass_split(&r.field, &mesh, &f, p).unwrap();
        assert!((s.d_plus + s.d_minus - 1.0).abs() < 1e-8);
        assert!((s.n_plus + s.n_minus - r.lambda).abs() < 1e-8 * r.lambda);
        if matches!(family, CoefficientFamily::ConstantOffDiag(_)) {
            assert!((s.d_plus - 0.5).abs() < 1e-6, "{}", s.d_plus);
        }
    }
    let (f, _) = coeffs(CoefficientFamily::Identity, SMALL.nx2, 2.0);
    let (half, r) = half_cylinder_eigen(Side::Plus, 2.0, SMALL, &f, 2.0, &opts).unwrap();
    assert!(matches!(
        end_mass_split(&r.field, &half, &f, 2.0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn translate_distance_of_matching_fields() {
    let ell = 3.0;
    let full = mixed(ell, SMALL);
    let g = |x1: f64| (1.0 + 0.3 * x1).exp();
    for side in [Side::Plus, Side::Minus] {
        let half = build_mesh(DomainSpec::half(
            side.shape(),
            ell,
            SMALL.cells_per_unit,
            SMALL.nx2,
        ))
        .unwrap();
        // matching ends: full at -ell (+) or +ell (-), half at 0
        let shift = match side {
            Side::Plus => -ell,
            Side::Minus => ell,
        };
        let u_full = DiscreteField::from_fn(&full, |x1, x2| g(x1 - shift) * (PI * x2).cos());
        let u_half = DiscreteField::from_fn(&half, |x1, x2| g(x1) * (PI * x2).cos());
        let d = translate_distance(&u_full, &full, &u_half, &half, side, 2.0, 2.0).unwrap();
        assert!(d < 1e-12, "{side:?}: {d}");
        let flipped =
            translate_distance(&u_full, &full, &u_half.scaled(-1.0), &half, side, 2.0, 2.0)
                .unwrap();
        assert_eq!(d, flipped);
        let off = DiscreteField::from_fn(&half, |x1, x2| 2.0 * g(x1) * (PI * x2).cos());
        assert!(translate_distance(&u_full, &full, &off, &half, side, 2.0, 3.0).unwrap() > 0.1);
    }
    let coarse = build_mesh(DomainSpec::half(
        Shape::HalfPlus,
        ell,
        SMALL.cells_per_unit,
        8,
    ))
    .unwrap();
    let u = DiscreteField::zeros(&full);
    let v = DiscreteField::zeros(&coarse);
    assert!(matches!(
        translate_distance(&u, &full, &v, &coarse, Side::Plus, 1.0, 2.0),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn translate_distance_shrinks_with_length() {
    let (lo, _) = coeffs(CoefficientFamily::LinearOffDiag(0.8), DESK.nx2, 2.0);
    let opts = SolveOptions::default();
    let res = Resolution {
        nx2: 32,
        cells_per_unit: 4,
    };
    let distances: Vec<f64> = [4.0, 8.0, 12.0]
        .iter()
        .map(|&ell| {
            let full = mixed(ell, res);
            let u = minimize_rayleigh(&full, &lo, 2.0, &opts).unwrap();
            let (half, v) = half_cylinder_eigen(Side::Minus, ell, res, &lo, 2.0, &opts).unwrap();
            translate_distance(&u.field, &full, &v.field, &half, Side::Minus, 4.0, 2.0).unwrap()
        })
        .collect();
    assert!(distances.windows(2).all(|w| w[1] < w[0]), "{distances:?}");
}

#[test]
fn identity_sweep_rows() {
    let table = sweep_lambda(
        &[2.0, 4.0, 8.0],
        &CoefficientFamily::Identity,
        2.0,
        SMALL,
        &SolveOptions::default(),
    )
    .unwrap();
    assert_eq!(table.rows.len(), 3);
    for r in &table.rows {
        assert!(r.gap.abs() < 1e-9 * r.mu1);
        assert!((r.d_plus + r.d_minus - 1.0).abs() < 1e-8);
        assert!((r.n_plus + r.n_minus - r.lambda_mixed).abs() < 1e-8 * r.lambda_mixed);
        assert!(r.mu1 <= r.lambda_dirichlet);
        assert!(r.lambda_mixed <= r.lambda_half_plus && r.lambda_mixed <= r.lambda_half_minus);
        assert!(r.converged);
        assert_eq!(r.family, "identity");
    }
    let csv = table.to_csv_string().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), SweepTable::HEADER.join(","));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), SweepTable::HEADER.len());
    let lambda: f64 = first[3].parse().unwrap();
    assert_eq!(lambda, table.rows[0].lambda_mixed);
    assert_eq!(first[3], format!("{:.16e}", table.rows[0].lambda_mixed));
}

#[test]
fn sweep_rejects_unordered_lengths() {
    let r = sweep_lambda(
        &[4.0, 2.0],
        &CoefficientFamily::Identity,
        2.0,
        SMALL,
        &SolveOptions::default(),
    );
    assert!(matches!(r, Err(Error::Precondition(_))));
    let r = sweep_lambda(
        &[2.0, 2.0],
        &CoefficientFamily::Identity,
        2.0,
        SMALL,
        &SolveOptions::default(),
    );
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn gap_family_sweep_bracketing() {
    let table = sweep_lambda(
        &[2.0, 4.0],
        &CoefficientFamily::LinearOffDiag(0.8),
        3.0,
        SMALL,
        &SolveOptions::default(),
    )
    .unwrap();
    for r in &table.rows {
        assert!(r.lambda_mixed <= r.mu1);
        assert!(r.lambda_mixed <= r.lambda_half_plus.min(r.lambda_half_minus) + 1e-9);
        assert!(r.mu1 <= r.lambda_dirichlet);
        assert!((r.d_plus + r.d_minus - 1.0).abs() < 1e-8);
        assert!(r.alpha_hat.is_nan() || r.alpha_hat > 0.0);
    }
}
