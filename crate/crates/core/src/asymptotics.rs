//! ℓ-sweeps and the derived quantities used to study long cylinders:
//! semi-infinite limits, slab decay, gap integrals, test-function bounds,
//! Picone residuals, end-mass splits and translate distances.

use rayon::prelude::*;

use crate::coeffs::{make_coefficients, CoefficientFamily, CoefficientField};
use crate::discretization::{cell_integrals, power_and_slope, DiscreteField, QuadratureRule};
use crate::eigensolve::{
    cross_section_ground_state, half_cylinder_eigen, minimize_rayleigh, CrossSectionResult,
    EigenResult, Resolution, Side, SolveOptions,
};
use crate::error::{check_exponent, Error, Result};
use crate::mesh::{build_mesh, slab_integrals, BoundaryKind, CylinderMesh, DomainSpec, Shape};

pub use crate::mesh::{SlabProfile, SlabRecord};

/// Slack allowed when checking that a half-cylinder ladder is nonincreasing,
/// relative to `max(1, λ)`.
pub const MONOTONE_SLACK: f64 = 1e-7;

/// Builds the coefficient field of a family, solving the cross-section
/// problem first when the family needs `W`.
pub fn family_field(family: &CoefficientFamily, nx2: usize, p: f64) -> Result<CoefficientField> {
    if family.needs_cross_section() {
        let identity = make_coefficients(&CoefficientFamily::Identity, None)?;
        let cross = cross_section_ground_state(nx2, &identity, p)?;
        make_coefficients(family, Some(&cross))
    } else {
        make_coefficients(family, None)
    }
}

// ---------------------------------------------------------------------------
// sweeps

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub ell: f64,
    pub p: f64,
    pub family: String,
    pub lambda_mixed: f64,
    pub lambda_dirichlet: f64,
    pub lambda_half_plus: f64,
    pub lambda_half_minus: f64,
    pub mu1: f64,
    /// `mu1 - lambda_mixed`
    pub gap: f64,
    /// NaN when the decay fit is not possible (short cylinders).
    pub alpha_hat: f64,
    pub r_squared: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub n_plus: f64,
    pub n_minus: f64,
    /// `∫_{(-2,2)×ω} |u|^p` of the mixed minimizer.
    pub central_mass: f64,
    /// Total over the four solves of the row.
    pub iterations: usize,
    /// Largest final residual over the four solves.
    pub residual: f64,
    /// All four solves converged.
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const HEADER: [&'static str; 17] = [
        "ell",
        "p",
        "family",
        "lambda_mixed",
        "lambda_dirichlet",
        "lambda_half_plus",
        "lambda_half_minus",
        "mu1",
        "gap",
        "alpha_hat",
        "d_plus",
        "d_minus",
        "n_plus",
        "n_minus",
        "iterations",
        "residual",
        "converged",
    ];
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl SweepRow {
    fn csv_record(&self) -> Vec<String> {
        let f = fmt_f64;
        vec![
            f(self.ell),
            f(self.p),
            self.family.clone(),
            f(self.lambda_mixed),
            f(self.lambda_dirichlet),
            f(self.lambda_half_plus),
            f(self.lambda_half_minus),
            f(self.mu1),
            f(self.gap),
            f(self.alpha_hat),
            f(self.d_plus),
            f(self.d_minus),
            f(self.n_plus),
            f(self.n_minus),
            self.iterations.to_string(),
            f(self.residual),
            self.converged.to_string(),
        ]
    }
}

impl SweepTable {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        writer.write_record(Self::HEADER).map_err(io)?;
        for row in &self.rows {
            writer.write_record(row.csv_record()).map_err(io)?;
        }
        writer.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    /// `(ℓ, λ̃)` pairs of one half-cylinder column.
    pub fn half_ladder(&self, side: Side) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| {
                let v = match side {
                    Side::Plus => r.lambda_half_plus,
                    Side::Minus => r.lambda_half_minus,
                };
                (r.ell, v)
            })
            .collect()
    }
}

fn check_ells(ells: &[f64]) -> Result<()> {
    if ells.is_empty() {
        return Err(Error::Precondition("no lengths requested".into()));
    }
    if ells.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::Precondition(format!(
            "lengths must be positive, got {ells:?}"
        )));
    }
    if ells.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(format!(
            "lengths must be strictly increasing, got {ells:?}"
        )));
    }
    Ok(())
}

fn sweep_row(
    ell: f64,
    label: &str,
    coeffs: &CoefficientField,
    cross: &CrossSectionResult,
    p: f64,
    resolution: Resolution,
    opts: &SolveOptions,
) -> Result<SweepRow> {
    let full = |bc| {
        build_mesh(DomainSpec::full(
            ell,
            bc,
            resolution.cells_per_unit,
            resolution.nx2,
        ))
    };
    let mixed_mesh = full(BoundaryKind::Mixed)?;
    let mixed = minimize_rayleigh(&mixed_mesh, coeffs, p, opts)?;
    let dir_mesh = full(BoundaryKind::DirichletAll)?;
    let dirichlet = minimize_rayleigh(&dir_mesh, coeffs, p, opts)?;
    let (_, plus) = half_cylinder_eigen(Side::Plus, ell, resolution, coeffs, p, opts)?;
    let (_, minus) = half_cylinder_eigen(Side::Minus, ell, resolution, coeffs, p, opts)?;

    let profile = slab_integrals(&mixed_mesh, coeffs, &mixed.field, p)?;
    let (alpha_hat, r_squared) = match fit_decay(&profile, None) {
        Ok(fit) => (fit.alpha_hat, fit.r_squared),
        Err(_) => (f64::NAN, f64::NAN),
    };
    let split = end_mass_split(&mixed.field, &mixed_mesh, coeffs, p)?;
    let central_mass = central_p_mass(&profile, 2.0);
    let solves: [&EigenResult; 4] = [&mixed, &dirichlet, &plus, &minus];
    Ok(SweepRow {
        ell,
        p,
        family: label.to_string(),
        lambda_mixed: mixed.lambda,
        lambda_dirichlet: dirichlet.lambda,
        lambda_half_plus: plus.lambda,
        lambda_half_minus: minus.lambda,
        mu1: cross.mu1,
        gap: cross.mu1 - mixed.lambda,
        alpha_hat,
        r_squared,
        d_plus: split.d_plus,
        d_minus: split.d_minus,
        n_plus: split.n_plus,
        n_minus: split.n_minus,
        central_mass,
        iterations: solves.iter().map(|r| r.iterations).sum(),
        residual: solves.iter().fold(0.0f64, |m, r| m.max(r.final_residual)),
        converged: solves.iter().all(|r| r.converged),
    })
}

/// Mass of the slabs lying inside `(-r, r)`.
pub fn central_p_mass(profile: &SlabProfile, r: f64) -> f64 {
    profile
        .records
        .iter()
        .filter(|s| s.x1_left >= -r - 1e-9 && s.x1_right <= r + 1e-9)
        .map(|s| s.p_mass)
        .sum()
}

/// Solves the mixed, Dirichlet and both half-cylinder problems for every
/// length. Rows are computed in parallel and returned in `ells` order.
pub fn sweep_lambda(
    ells: &[f64],
    family: &CoefficientFamily,
    p: f64,
    resolution: Resolution,
    opts: &SolveOptions,
) -> Result<SweepTable> {
    check_exponent(p)?;
    check_ells(ells)?;
    let coeffs = family_field(family, resolution.nx2, p)?;
    sweep_field(ells, &family.label(), &coeffs, p, resolution, opts)
}

/// As [`sweep_lambda`] for an explicit coefficient field, labelled `label`.
pub fn sweep_field(
    ells: &[f64],
    label: &str,
    coeffs: &CoefficientField,
    p: f64,
    resolution: Resolution,
    opts: &SolveOptions,
) -> Result<SweepTable> {
    check_exponent(p)?;
    check_ells(ells)?;
    opts.validate()?;
    let cross = cross_section_ground_state(resolution.nx2, coeffs, p)?;
    let rows = ells
        .par_iter()
        .map(|&ell| sweep_row(ell, label, coeffs, &cross, p, resolution, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable { rows })
}

// ---------------------------------------------------------------------------
// semi-infinite limits

#[derive(Clone, Debug, PartialEq)]
pub struct NuEstimate {
    pub side: Side,
    /// `(ℓ, λ̃(ℓ))` in ladder order.
    pub ladder: Vec<(f64, f64)>,
    pub last_value: f64,
    pub extrapolated: f64,
    pub monotone_ok: bool,
    pub converged: bool,
}

/// Limit `ν` of `v(ℓ) = ν + C ρ^ℓ` through the last three points, or `None`
/// when the points are not a decaying geometric tail.
pub fn geometric_limit(points: &[(f64, f64)]) -> Option<f64> {
    let [(l1, v1), (l2, v2), (l3, v3)] = *points.get(points.len().checked_sub(3)?..)? else {
        return None;
    };
    let (d1, d2) = (v2 - v1, v3 - v2);
    if d2 == 0.0 {
        return Some(v3);
    }
    if d1 == 0.0 || d1.signum() != d2.signum() {
        return None;
    }
    let ratio = d2 / d1;
    let (h1, h2) = (l2 - l1, l3 - l2);
    if (h1 - h2).abs() <= 1e-12 * h1.max(h2) {
        if ratio >= 1.0 {
            return None;
        }
        // Aitken Δ²
        return Some(v3 - d2 * d2 / (d2 - d1));
    }
    // ratio = ρ^{h1} (ρ^{h2} - 1) / (ρ^{h1} - 1), increasing in ρ ∈ (0, 1)
    let shape = |rho: f64| rho.powf(h1) * (rho.powf(h2) - 1.0) / (rho.powf(h1) - 1.0);
    if ratio >= h2 / h1 {
        return None;
    }
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shape(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    // d2 = C ρ^{l2} (ρ^{h2} - 1), tail at l3 is C ρ^{l3}
    let tail = d2 * rho.powf(h2) / (rho.powf(h2) - 1.0);
    Some(v3 - tail)
}

/// Half-cylinder first eigenvalues along a ladder of lengths with their
/// extrapolated limit.
pub fn nu_infinity_estimate(
    side: Side,
    coeffs: &CoefficientField,
    p: f64,
    ell_ladder: &[f64],
    resolution: Resolution,
    opts: &SolveOptions,
) -> Result<NuEstimate> {
    check_ells(ell_ladder)?;
    if ell_ladder.len() < 3 {
        return Err(Error::Precondition(format!(
            "ladder needs at least 3 lengths, got {}",
            ell_ladder.len()
        )));
    }
    let rungs = ell_ladder
        .par_iter()
        .map(|&ell| half_cylinder_eigen(side, ell, resolution, coeffs, p, opts).map(|(_, r)| r))
        .collect::<Result<Vec<_>>>()?;
    let ladder: Vec<(f64, f64)> = ell_ladder
        .iter()
        .zip(&rungs)
        .map(|(&l, r)| (l, r.lambda))
        .collect();
    Ok(NuEstimate::from_ladder(
        side,
        ladder,
        rungs.iter().all(|r| r.converged),
    ))
}

impl NuEstimate {
    /// Monotonicity check and extrapolation of an already solved ladder.
    pub fn from_ladder(side: Side, ladder: Vec<(f64, f64)>, converged: bool) -> NuEstimate {
        let monotone_ok = ladder
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 + MONOTONE_SLACK * w[0].1.abs().max(1.0));
        let last_value = ladder.last().map(|x| x.1).unwrap_or(f64::NAN);
        let extrapolated = if monotone_ok {
            geometric_limit(&ladder)
                .filter(|v| v.is_finite() && *v <= last_value)
                .unwrap_or(last_value)
        } else {
            last_value
        };
        NuEstimate {
            side,
            ladder,
            last_value,
            extrapolated,
            monotone_ok,
            converged,
        }
    }
}

// ---------------------------------------------------------------------------
// slab decay

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub alpha_hat: f64,
    pub r_squared: f64,
    /// Inclusive range of slab distances from the dominant end.
    pub window: (usize, usize),
    /// The dominant end is the left one.
    pub from_left: bool,
    /// `alpha_hat >= 1`: the profile does not decay.
    pub no_decay: bool,
}

/// Least-squares fit of `log ∫_slab |∇u|^p` against slab distance from the
/// dominant end. The default window is `[2, n/2 - 2]` for `n` slabs.
pub fn fit_decay(profile: &SlabProfile, window: Option<(usize, usize)>) -> Result<DecayFit> {
    let n = profile.records.len();
    let half = n / 2;
    let left_mass: f64 = profile.records[..half].iter().map(|r| r.p_mass).sum();
    let right_mass: f64 = profile.records[n - half..].iter().map(|r| r.p_mass).sum();
    let from_left = left_mass >= right_mass;
    let (lo, hi) = window.unwrap_or((2, half.saturating_sub(2)));
    if hi < lo || hi - lo + 1 < 3 || hi >= n {
        return Err(Error::Precondition(format!(
            "decay window [{lo}, {hi}] needs at least 3 of {n} slabs"
        )));
    }
    let mut xs = Vec::with_capacity(hi - lo + 1);
    let mut ys = Vec::with_capacity(hi - lo + 1);
    for d in lo..=hi {
        let idx = if from_left { d } else { n - 1 - d };
        let e = profile.records[idx].grad_energy;
        if !(e > 0.0) {
            return Err(Error::Fit(format!(
                "nonpositive slab energy {e:e} at distance {d}"
            )));
        }
        xs.push(d as f64);
        ys.push(e.ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let r_squared = if ss_tot <= 1e-300 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let alpha_hat = slope.exp();
    Ok(DecayFit {
        alpha_hat,
        r_squared,
        window: (lo, hi),
        from_left,
        no_decay: alpha_hat >= 1.0 - 1e-12,
    })
}

// ---------------------------------------------------------------------------
// cross-section functionals

/// Points of the cross-section quadrature: `(weight, a, W, W')`.
fn cross_points<'a>(
    cross: &'a CrossSectionResult,
    coeffs: &'a CoefficientField,
) -> impl Iterator<Item = (f64, [f64; 3], f64, f64)> + 'a {
    let quad = QuadratureRule::default();
    let nodes = cross.nodes();
    let w = cross.w();
    (0..cross.nx2()).flat_map(move |e| {
        let h = nodes[e + 1] - nodes[e];
        let slope = cross.element_slope(e);
        quad.abscissae()
            .iter()
            .zip(quad.weights())
            .map(|(t, wt)| {
                let x2 = nodes[e] + t * h;
                let we = w[e] * (1.0 - t) + w[e + 1] * t;
                (wt * h, coeffs.at(x2), we, slope)
            })
            .collect::<Vec<_>>()
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapIntegral {
    /// `∫ |a22 W'^2|^{(p-2)/2} (a12 W') W`
    pub value: f64,
    /// `a12 W'` vanishes identically on the grid.
    pub coupling_vanishes: bool,
}

pub fn gap_integral_i2(
    cross: &CrossSectionResult,
    coeffs: &CoefficientField,
    p: f64,
) -> GapIntegral {
    let mut value = 0.0;
    let mut max_coupling = 0.0f64;
    let mut max_slope = 0.0f64;
    for (wq, [_, a12, a22], w, dw) in cross_points(cross, coeffs) {
        let weight = power_and_slope(a22 * dw * dw, p).1 / (0.5 * p);
        value += wq * weight * a12 * dw * w;
        max_coupling = max_coupling.max((a12 * dw).abs());
        max_slope = max_slope.max(dw.abs());
    }
    GapIntegral {
        value,
        coupling_vanishes: max_coupling <= 1e-12 * max_slope.max(1.0),
    }
}

/// Rayleigh quotient of `e^{-ε x1} W(x2)` on `(0, T) × ω`. The axial factor
/// `∫ e^{-pεx1}` is common to numerator and denominator, so the value does not
/// depend on `T`; the truncation only has to make the neglected tail small.
pub fn exp_test_upper_bound(
    eps: f64,
    cross: &CrossSectionResult,
    coeffs: &CoefficientField,
    p: f64,
    truncation: f64,
) -> Result<f64> {
    check_exponent(p)?;
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(truncation * eps >= 10.0) {
        return Err(Error::Precondition(format!(
            "truncation {truncation} < 10/eps leaves a tail above 1e-4"
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (wq, [a11, a12, a22], w, dw) in cross_points(cross, coeffs) {
        let s = eps * eps * a11 * w * w - 2.0 * eps * a12 * dw * w + a22 * dw * dw;
        num += wq * power_and_slope(s, p).0;
        den += wq * w.abs().powf(p);
    }
    Ok(num / den)
}

/// Lower bound `λ^{p/2} / C_p^p` on every half-cylinder and semi-infinite
/// eigenvalue, from ellipticity and the Poincaré inequality.
pub fn poincare_lower_bound(cross: &CrossSectionResult, coeffs: &CoefficientField) -> f64 {
    coeffs.lambda_margin().powf(0.5 * cross.p) / cross.poincare_cp.powf(cross.p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlabBoundVariant {
    /// `(a22 W'^2 - a12 W' / a11)^{p/2}`
    AsPrinted,
    /// `(a22 W'^2 - (a12 W')^2 / a11)^{p/2}`
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlabBound {
    pub value: f64,
    /// Quadrature points where the base was negative and clamped to 0.
    pub clamped: usize,
}

pub fn slab_bound(
    cross: &CrossSectionResult,
    coeffs: &CoefficientField,
    p: f64,
    variant: SlabBoundVariant,
) -> SlabBound {
    let mut value = 0.0;
    let mut clamped = 0;
    for (wq, [a11, a12, a22], _, dw) in cross_points(cross, coeffs) {
        let coupling = a12 * dw;
        let base = a22 * dw * dw
            - match variant {
                SlabBoundVariant::AsPrinted => coupling / a11,
                SlabBoundVariant::Squared => coupling * coupling / a11,
            };
        if base < 0.0 {
            clamped += 1;
        }
        value += wq * base.max(0.0).powf(0.5 * p);
    }
    SlabBound { value, clamped }
}

// ---------------------------------------------------------------------------
// second eigenvalue bound

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beta2Bound {
    /// `max(λ̃⁺, λ̃⁻)`
    pub value: f64,
    pub plus: f64,
    pub minus: f64,
    pub converged: bool,
}

/// Upper bound on the second eigenvalue of the `(-ℓ, ℓ)` mixed problem from
/// the two half-cylinder minimizers, which have disjoint supports.
pub fn beta2_upper_bound(
    ell: f64,
    resolution: Resolution,
    coeffs: &CoefficientField,
    p: f64,
    opts: &SolveOptions,
) -> Result<Beta2Bound> {
    let (_, plus) = half_cylinder_eigen(Side::Plus, ell, resolution, coeffs, p, opts)?;
    let (_, minus) = half_cylinder_eigen(Side::Minus, ell, resolution, coeffs, p, opts)?;
    Ok(Beta2Bound {
        value: plus.lambda.max(minus.lambda),
        plus: plus.lambda,
        minus: minus.lambda,
        converged: plus.converged && minus.converged,
    })
}

// ---------------------------------------------------------------------------
// Picone

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiconeResidual {
    /// Smallest pointwise residual.
    pub min_residual: f64,
    /// Smallest residual divided by the local size of its terms.
    pub min_relative: f64,
    /// Quadrature points inspected.
    pub points: usize,
}

/// Minimum over quadrature points with `W > w_floor` of
/// `|A∇u·∇u|^{p/2} - |A∇W·∇W|^{(p-2)/2} A∇W·∇(u^p / W^{p-1})`, with `W`
/// lifted constant in `x1`. `w_floor` defaults to `1e-3 max W`.
pub fn picone_residual_min(
    u: &DiscreteField,
    cross: &CrossSectionResult,
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    p: f64,
    w_floor: Option<f64>,
) -> Result<PiconeResidual> {
    check_exponent(p)?;
    u.check_mesh(mesh)?;
    if cross.nx2() != mesh.n2() {
        return Err(Error::Dimension {
            expected: mesh.n2() + 1,
            actual: cross.nx2() + 1,
        });
    }
    if u.values.iter().any(|v| *v < 0.0) {
        return Err(Error::Precondition(
            "Picone residual needs a nonnegative field".into(),
        ));
    }
    let w = cross.w();
    let w_max = w.iter().fold(0.0f64, |m, v| m.max(*v));
    let floor = w_floor.unwrap_or(1e-3 * w_max);
    if !(floor > 0.0) {
        return Err(Error::Precondition(format!(
            "w_floor must be positive, got {floor}"
        )));
    }
    let nodal = u.expand(mesh);
    let quad = QuadratureRule::default();
    let (h1, h2) = (mesh.h1(), mesh.h2());
    let mut min_residual = f64::INFINITY;
    let mut min_relative = f64::INFINITY;
    let mut points = 0;
    for i in 0..mesh.n1() {
        for j in 0..mesh.n2() {
            let c = mesh.cell_nodes(i, j).map(|n| nodal[n]);
            let slope_w = (w[j + 1] - w[j]) / h2;
            for &s in quad.abscissae() {
                for &t in quad.abscissae() {
                    let wv = w[j] * (1.0 - t) + w[j + 1] * t;
                    if wv <= floor {
                        continue;
                    }
                    let uv = c[0] * (1.0 - s) * (1.0 - t)
                        + c[1] * s * (1.0 - t)
                        + c[2] * (1.0 - s) * t
                        + c[3] * s * t;
                    let g1 = ((c[1] - c[0]) * (1.0 - t) + (c[3] - c[2]) * t) / h1;
                    let g2 = ((c[2] - c[0]) * (1.0 - s) + (c[3] - c[1]) * s) / h2;
                    let [a11, a12, a22] = coeffs.at(mesh.x2(j) + t * h2);
                    let su = g1 * (a11 * g1 + a12 * g2) + g2 * (a12 * g1 + a22 * g2);
                    let sw = a22 * slope_w * slope_w;
                    // A∇W = (a12 W', a22 W')
                    let aw_dot_gu = a12 * slope_w * g1 + a22 * slope_w * g2;
                    let ratio = uv / wv;
                    let lhs = su.abs().powf(0.5 * p);
                    let sw_pow = sw.abs().powf(0.5 * p - 1.0);
                    let cross_term = p * ratio.powf(p - 1.0) * sw_pow * aw_dot_gu;
                    let tail = (p - 1.0) * ratio.powf(p) * sw_pow * sw;
                    let residual = lhs - cross_term + tail;
                    let scale = lhs
                        .max(cross_term.abs())
                        .max(tail.abs())
                        .max(f64::MIN_POSITIVE);
                    min_residual = min_residual.min(residual);
                    min_relative = min_relative.min(residual / scale);
                    points += 1;
                }
            }
        }
    }
    Ok(PiconeResidual {
        min_residual,
        min_relative,
        points,
    })
}

// ---------------------------------------------------------------------------
// ends of the full cylinder

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndSplit {
    /// `∫_{x1 > 0} |u|^p`
    pub d_plus: f64,
    pub d_minus: f64,
    /// `∫_{x1 > 0} |A∇u·∇u|^{p/2}`
    pub n_plus: f64,
    pub n_minus: f64,
}

/// Mass and energy of `u` on either side of `x1 = 0`.
pub fn end_mass_split(
    u: &DiscreteField,
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    p: f64,
) -> Result<EndSplit> {
    check_exponent(p)?;
    u.check_mesh(mesh)?;
    if mesh.spec().shape != Shape::FullCylinder {
        return Err(Error::Precondition(
            "end split needs a full cylinder".into(),
        ));
    }
    let cells = cell_integrals(mesh, coeffs, &u.expand(mesh), p, &QuadratureRule::default());
    let mut split = EndSplit {
        d_plus: 0.0,
        d_minus: 0.0,
        n_plus: 0.0,
        n_minus: 0.0,
    };
    for i in 0..mesh.n1() {
        let plus = mesh.x1(i) + 0.5 * mesh.h1() > 0.0;
        for c in &cells[i * mesh.n2()..(i + 1) * mesh.n2()] {
            if plus {
                split.d_plus += c.p_mass;
                split.n_plus += c.energy;
            } else {
                split.d_minus += c.p_mass;
                split.n_minus += c.energy;
            }
        }
    }
    Ok(split)
}

/// `L^p` distance on `Ω_r^side` between the full-cylinder field translated
/// so that its matching end sits at `x1 = 0` and the half-cylinder field,
/// minimized over the sign of the half-cylinder field.
pub fn translate_distance(
    u_full: &DiscreteField,
    full_mesh: &CylinderMesh,
    u_half: &DiscreteField,
    half_mesh: &CylinderMesh,
    side: Side,
    r: f64,
    p: f64,
) -> Result<f64> {
    check_exponent(p)?;
    u_full.check_mesh(full_mesh)?;
    u_half.check_mesh(half_mesh)?;
    if full_mesh.spec().shape != Shape::FullCylinder || half_mesh.spec().shape != side.shape() {
        return Err(Error::Precondition(
            "translate distance needs a full and a matching half mesh".into(),
        ));
    }
    if !full_mesh.grid_compatible(half_mesh) {
        return Err(Error::Dimension {
            expected: full_mesh.n2(),
            actual: half_mesh.n2(),
        });
    }
    let cells_f = r / full_mesh.h1();
    let k = cells_f.round() as usize;
    if !(r > 0.0)
        || (cells_f - k as f64).abs() > 1e-9
        || k > full_mesh.n1() / 2
        || k > half_mesh.n1()
    {
        return Err(Error::Precondition(format!(
            "r = {r} does not fit both meshes"
        )));
    }
    let full = u_full.expand(full_mesh);
    let half = u_half.expand(half_mesh);
    let stride = full_mesh.n2() + 1;
    // axial node offsets of Ω_r^side in each mesh
    let (f0, h0) = match side {
        Side::Plus => (0, 0),
        Side::Minus => (full_mesh.n1() - k, half_mesh.n1() - k),
    };
    let quad = QuadratureRule::default();
    let area = full_mesh.h1() * full_mesh.h2();
    let mut dist = [0.0; 2];
    for i in 0..k {
        for j in 0..full_mesh.n2() {
            let corner = |field: &[f64], i0: usize| {
                [
                    field[(i0 + i) * stride + j],
                    field[(i0 + i + 1) * stride + j],
                    field[(i0 + i) * stride + j + 1],
                    field[(i0 + i + 1) * stride + j + 1],
                ]
            };
            let a = corner(&full, f0);
            let b = corner(&half, h0);
            for (qs, ws) in quad.abscissae().iter().zip(quad.weights()) {
                for (qt, wt) in quad.abscissae().iter().zip(quad.weights()) {
                    let phi = [
                        (1.0 - qs) * (1.0 - qt),
                        qs * (1.0 - qt),
                        (1.0 - qs) * qt,
                        qs * qt,
                    ];
                    let va: f64 = a.iter().zip(&phi).map(|(x, f)| x * f).sum();
                    let vb: f64 = b.iter().zip(&phi).map(|(x, f)| x * f).sum();
                    let w = ws * wt * area;
                    dist[0] += w * (va - vb).abs().powf(p);
                    dist[1] += w * (va + vb).abs().powf(p);
                }
            }
        }
    }
    Ok(dist[0].min(dist[1]).powf(1.0 / p))
}
