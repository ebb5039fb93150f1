use sprs::{CsMat, TriMat};

use super::descent::{minimize, RayleighProblem};
use super::WEIGHT_FLOOR;
use super::{SolveOptions, StopReason};
use crate::coeffs::{make_coefficients, CoefficientFamily, CoefficientField, Profile};
use crate::discretization::{
    abs_power, abs_power_change, csr_mul, power_and_slope, power_change, QuadratureRule,
};
use crate::error::{check_exponent, Error, Result};
use crate::linalg::BandedCholesky;
use crate::mesh::{X2_MAX, X2_MIN};

/// Ground state of the cross-section problem on `(-1/2, 1/2)` with Dirichlet
/// ends, discretized with P1 elements and the same Gauss rule as the
/// cylinder meshes in `x2`.
#[derive(Clone, Debug)]
pub struct CrossSectionResult {
    pub p: f64,
    pub mu1: f64,
    nodes: Vec<f64>,
    w: Vec<f64>,
    w_prime: Vec<f64>,
    /// Best constant in `‖u‖_p ≤ C_p ‖∇u‖_p`, i.e. `μ1(a22 ≡ 1)^{-1/p}`.
    pub poincare_cp: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl CrossSectionResult {
    pub fn nx2(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Node coordinates `x2_j`, endpoints included.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nodal values of `W` including the zero endpoint values.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// `W'` at each quadrature point, element-major.
    pub fn w_prime(&self) -> &[f64] {
        &self.w_prime
    }

    pub fn element_slope(&self, e: usize) -> f64 {
        (self.w[e + 1] - self.w[e]) / (self.nodes[e + 1] - self.nodes[e])
    }

    /// Nodal derivative estimate: mean of the adjacent element slopes,
    /// one-sided at the endpoints.
    pub fn nodal_derivative(&self) -> Vec<f64> {
        let n = self.nx2();
        (0..=n)
            .map(|j| match j {
                0 => self.element_slope(0),
                j if j == n => self.element_slope(n - 1),
                j => 0.5 * (self.element_slope(j - 1) + self.element_slope(j)),
            })
            .collect()
    }

    /// Piecewise-linear interpolant of `W`.
    pub fn eval(&self, x2: f64) -> f64 {
        let n = self.nx2();
        let h = (X2_MAX - X2_MIN) / n as f64;
        let t = ((x2 - X2_MIN) / h).clamp(0.0, n as f64);
        let e = (t.floor() as usize).min(n - 1);
        let s = t - e as f64;
        self.w[e] * (1.0 - s) + self.w[e + 1] * s
    }
}

pub(crate) struct CrossProblem {
    n2: usize,
    h: f64,
    p: f64,
    quad: QuadratureRule,
    a22: Vec<f64>,
    stiffness: CsMat<f64>,
    factor: BandedCholesky,
}

impl CrossProblem {
    pub(crate) fn new(n2: usize, coeffs: &CoefficientField, p: f64) -> Result<Self> {
        let quad = QuadratureRule::default();
        let h = (X2_MAX - X2_MIN) / n2 as f64;
        let nq = quad.points_per_dir();
        let a22: Vec<f64> = (0..n2)
            .flat_map(|e| {
                let x0 = X2_MIN + e as f64 * h;
                quad.abscissae()
                    .iter()
                    .map(move |t| x0 + t * h)
                    .collect::<Vec<_>>()
            })
            .map(|x2| coeffs.at(x2)[2])
            .collect();
        let stiffness = tridiagonal(n2, h, &quad, &a22, &vec![1.0; n2 * nq]);
        let factor = BandedCholesky::factor(&stiffness)?;
        Ok(CrossProblem {
            n2,
            h,
            p,
            quad,
            a22,
            stiffness,
            factor,
        })
    }

    fn nodal(&self, u: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n2 + 1];
        w[1..self.n2].copy_from_slice(u);
        w
    }
}

/// `∫ weight a22 φ_i' φ_j'` over the interior nodes.
fn tridiagonal(
    n2: usize,
    h: f64,
    quad: &QuadratureRule,
    a22: &[f64],
    weight: &[f64],
) -> CsMat<f64> {
    let nq = quad.points_per_dir();
    let n = n2 - 1;
    let mut tri = TriMat::new((n, n));
    for e in 0..n2 {
        let ke: f64 = (0..nq)
            .map(|q| quad.weights()[q] * a22[e * nq + q] * weight[e * nq + q])
            .sum::<f64>()
            / h;
        // element nodes e, e+1 -> free indices e-1, e
        let idx = [e.checked_sub(1), (e + 1 < n2).then_some(e)];
        for (a, ia) in idx.iter().enumerate() {
            let Some(ia) = ia else { continue };
            for (b, ib) in idx.iter().enumerate() {
                let Some(ib) = ib else { continue };
                tri.add_triplet(*ia, *ib, if a == b { ke } else { -ke });
            }
        }
    }
    tri.to_csr()
}

impl RayleighProblem for CrossProblem {
    fn dim(&self) -> usize {
        self.n2 - 1
    }

    fn p(&self) -> f64 {
        self.p
    }

    fn energy(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let w = self.nodal(u);
        let nq = self.quad.points_per_dir();
        let mut g = vec![0.0; self.n2 + 1];
        let mut total = 0.0;
        for e in 0..self.n2 {
            let slope = (w[e + 1] - w[e]) / self.h;
            let mut cell = 0.0;
            let mut dslope = 0.0;
            for q in 0..nq {
                let a22 = self.a22[e * nq + q];
                let (val, dval) = power_and_slope(a22 * slope * slope, self.p);
                let wq = self.quad.weights()[q] * self.h;
                cell += wq * val;
                dslope += wq * dval * 2.0 * a22 * slope;
            }
            total += cell;
            g[e] -= dslope / self.h;
            g[e + 1] += dslope / self.h;
        }
        grad.copy_from_slice(&g[1..self.n2]);
        total
    }

    fn mass(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let w = self.nodal(u);
        let mut g = vec![0.0; self.n2 + 1];
        let mut total = 0.0;
        for e in 0..self.n2 {
            let mut cell = 0.0;
            for (t, wt) in self.quad.abscissae().iter().zip(self.quad.weights()) {
                let v = w[e] * (1.0 - t) + w[e + 1] * t;
                let (val, dval) = abs_power(v, self.p);
                let wq = wt * self.h;
                cell += wq * val;
                g[e] += wq * dval * (1.0 - t);
                g[e + 1] += wq * dval * t;
            }
            total += cell;
        }
        grad.copy_from_slice(&g[1..self.n2]);
        total
    }

    fn energy_change(&self, u: &[f64], v: &[f64]) -> f64 {
        let (wu, wv) = (self.nodal(u), self.nodal(v));
        let nq = self.quad.points_per_dir();
        let mut total = 0.0;
        for e in 0..self.n2 {
            let su = (wu[e + 1] - wu[e]) / self.h;
            let sv = (wv[e + 1] - wv[e]) / self.h;
            let ds = ((wv[e + 1] - wu[e + 1]) - (wv[e] - wu[e])) / self.h;
            let mut cell = 0.0;
            for q in 0..nq {
                let a22 = self.a22[e * nq + q];
                let change = power_change(
                    a22 * su * su,
                    a22 * sv * sv,
                    a22 * ds * (su + sv),
                    0.5 * self.p,
                );
                cell += self.quad.weights()[q] * self.h * change;
            }
            total += cell;
        }
        total
    }

    fn mass_change(&self, u: &[f64], v: &[f64]) -> f64 {
        let (wu, wv) = (self.nodal(u), self.nodal(v));
        let mut total = 0.0;
        for e in 0..self.n2 {
            let (d0, d1) = (wv[e] - wu[e], wv[e + 1] - wu[e + 1]);
            let mut cell = 0.0;
            for (t, wt) in self.quad.abscissae().iter().zip(self.quad.weights()) {
                let a = wu[e] * (1.0 - t) + wu[e + 1] * t;
                let d = d0 * (1.0 - t) + d1 * t;
                cell += wt * self.h * abs_power_change(a, d, self.p);
            }
            total += cell;
        }
        total
    }

    fn precondition(&self, r: &[f64], out: &mut [f64]) {
        self.factor.solve(r, out);
    }

    fn metric(&self, s: &[f64], out: &mut [f64]) {
        csr_mul(&self.stiffness, s, out);
    }

    fn refresh(&mut self, u: &[f64]) {
        let w = self.nodal(u);
        let nq = self.quad.points_per_dir();
        let mut weight: Vec<f64> = (0..self.n2 * nq)
            .map(|k| {
                let e = k / nq;
                let slope = (w[e + 1] - w[e]) / self.h;
                power_and_slope(self.a22[k] * slope * slope, self.p).1 / (0.5 * self.p)
            })
            .collect();
        let top = weight.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lo = WEIGHT_FLOOR * top.max(f64::MIN_POSITIVE);
        weight.iter_mut().for_each(|v| *v = v.abs().max(lo));
        let k = tridiagonal(self.n2, self.h, &self.quad, &self.a22, &weight);
        if let Ok(factor) = BandedCholesky::factor(&k) {
            self.stiffness = k;
            self.factor = factor;
        }
    }
}

fn cross_options() -> SolveOptions {
    SolveOptions {
        tol_residual: 1e-12,
        tol_stagnation: 1e-15,
        max_iters: 200_000,
        ..SolveOptions::default()
    }
}

struct GroundState {
    mu1: f64,
    w: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn solve_ground_state(n2: usize, coeffs: &CoefficientField, p: f64) -> Result<GroundState> {
    let mut problem = CrossProblem::new(n2, coeffs, p)?;
    let h = (X2_MAX - X2_MIN) / n2 as f64;
    let init: Vec<f64> = (1..n2)
        .map(|j| (std::f64::consts::PI * (X2_MIN + j as f64 * h)).cos())
        .collect();
    let out = minimize(&mut problem, init, &cross_options(), true).ok_or(Error::ZeroField)?;
    let converged = matches!(out.stop, StopReason::Converged | StopReason::Stagnation)
        && out.residual <= 1e-8 * out.lambda.max(1.0);
    Ok(GroundState {
        mu1: out.lambda,
        w: problem.nodal(&out.u),
        iterations: out.iterations,
        residual: out.residual,
        converged,
    })
}

/// Internal entry point without the resolution floor; cylinder solvers use
/// it to seed coarse meshes.
pub(crate) fn ground_state_unchecked(
    nx2: usize,
    coeffs: &CoefficientField,
    p: f64,
) -> Result<CrossSectionResult> {
    check_exponent(p)?;
    if nx2 < 2 {
        return Err(Error::Precondition(
            "cross-section needs at least 2 cells".into(),
        ));
    }
    let state = solve_ground_state(nx2, coeffs, p)?;
    let unit_a22 = matches!(coeffs.a22(), Profile::Constant(c) if *c == 1.0);
    let poincare_mu = if unit_a22 {
        state.mu1
    } else {
        let identity = make_coefficients(&CoefficientFamily::Identity, None)?;
        solve_ground_state(nx2, &identity, p)?.mu1
    };
    let h = (X2_MAX - X2_MIN) / nx2 as f64;
    let nodes: Vec<f64> = (0..=nx2)
        .map(|j| {
            if j == nx2 {
                X2_MAX
            } else {
                X2_MIN + j as f64 * h
            }
        })
        .collect();
    let nq = QuadratureRule::default().points_per_dir();
    let w_prime = (0..nx2)
        .flat_map(|e| {
            let slope = (state.w[e + 1] - state.w[e]) / h;
            std::iter::repeat_n(slope, nq)
        })
        .collect();
    Ok(CrossSectionResult {
        p,
        mu1: state.mu1,
        nodes,
        w: state.w,
        w_prime,
        poincare_cp: poincare_mu.powf(-1.0 / p),
        iterations: state.iterations,
        residual: state.residual,
        converged: state.converged,
    })
}

/// First eigenpair of `-(|a22 W'^2|^{(p-2)/2} a22 W')' = μ |W|^{p-2} W` on the
/// cross-section with `W(±1/2) = 0`, normalized to `∫|W|^p = 1`, `W > 0`.
pub fn cross_section_ground_state(
    nx2: usize,
    coeffs: &CoefficientField,
    p: f64,
) -> Result<CrossSectionResult> {
    if nx2 < 8 {
        return Err(Error::Precondition(format!(
            "cross-section solve needs nx2 >= 8, got {nx2}"
        )));
    }
    ground_state_unchecked(nx2, coeffs, p)
}
