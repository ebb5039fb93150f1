//! Projected gradient descent on the Rayleigh quotient `E(u) / m(u)` over the
//! sphere `m(u) = 1`, with a Barzilai–Borwein step seed and Armijo
//! backtracking.
//!
//! The search direction is the residual `∇E - λ∇m` mapped through the inverse
//! of a stiffness matrix (a Sobolev gradient). For `p = 2` this is the plain
//! stiffness and a step of `1/2` is one step of inverse iteration; for
//! `p > 2` the stiffness is reweighted by `|A∇u·∇u|^{(p-2)/2}` at the
//! current iterate every few iterations.
//!
//! Quotient changes are evaluated pointwise in a cancellation-free form, so
//! the Armijo test keeps resolving decreases far below `eps * λ`.

use super::{SolveOptions, StopReason};
use crate::linalg::{dot, norm_inf};

pub(crate) trait RayleighProblem {
    fn dim(&self) -> usize;
    fn p(&self) -> f64;
    /// Returns `E(u)` and overwrites `grad` with `∇E(u)`.
    fn energy(&self, u: &[f64], grad: &mut [f64]) -> f64;
    /// Returns `m(u)` and overwrites `grad` with `∇m(u)`.
    fn mass(&self, u: &[f64], grad: &mut [f64]) -> f64;
    /// `E(v) - E(u)`
    fn energy_change(&self, u: &[f64], v: &[f64]) -> f64;
    /// `m(v) - m(u)`
    fn mass_change(&self, u: &[f64], v: &[f64]) -> f64;
    /// `out = P⁻¹ r`
    fn precondition(&self, r: &[f64], out: &mut [f64]);
    /// `out = P s`
    fn metric(&self, s: &[f64], out: &mut [f64]);
    /// Rebuilds the preconditioner around `u`; keeps the old one on failure.
    fn refresh(&mut self, _u: &[f64]) {}
}

pub(crate) struct DescentOutcome {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    pub stop: StopReason,
}

struct State {
    u: Vec<f64>,
    e: f64,
    m: f64,
    lambda: f64,
    /// `∇E - λ∇m` at unit mass
    g: Vec<f64>,
}

const POSITIVITY_PERIOD: usize = 50;
const STAGNATION_WINDOW: usize = 25;
const MAX_BACKTRACKS: usize = 60;
const REFRESH_PERIOD: usize = 10;

/// Rescales `u` to unit mass and evaluates the quotient and its residual.
/// `lambda` overrides the directly computed quotient when supplied.
fn evaluate(problem: &dyn RayleighProblem, mut u: Vec<f64>, lambda: Option<f64>) -> Option<State> {
    let n = problem.dim();
    let p = problem.p();
    let mut ge = vec![0.0; n];
    let mut gm = vec![0.0; n];
    let m = problem.mass(&u, &mut gm);
    if !(m > 0.0) || !m.is_finite() {
        return None;
    }
    let e = problem.energy(&u, &mut ge);
    // homogeneity of degree p
    let c = m.powf(-1.0 / p);
    let cp = c.powf(p);
    let cg = c.powf(p - 1.0);
    u.iter_mut().for_each(|v| *v *= c);
    let lambda = lambda.unwrap_or(e / m);
    let g = ge
        .iter()
        .zip(&gm)
        .map(|(a, b)| cg * (a - lambda * b))
        .collect();
    Some(State {
        u,
        e: e * cp,
        m: m * cp,
        lambda,
        g,
    })
}

/// Change of the quotient from `state.u` to `v`, or `None` if `v` has no mass.
fn quotient_change(problem: &dyn RayleighProblem, state: &State, v: &[f64]) -> Option<f64> {
    let de = problem.energy_change(&state.u, v);
    let dm = problem.mass_change(&state.u, v);
    let m_new = state.m + dm;
    if !(m_new > 0.0) || !de.is_finite() || !dm.is_finite() {
        return None;
    }
    Some((de * state.m - state.e * dm) / (state.m * m_new))
}

fn project_positive(u: &[f64]) -> Vec<f64> {
    let total: f64 = u.iter().sum();
    let sign = if total < 0.0 { -1.0 } else { 1.0 };
    u.iter().map(|v| (sign * v).max(0.0)).collect()
}

/// Replaces the state by its positive part when that does not raise the
/// quotient.
fn try_projection(problem: &dyn RayleighProblem, state: &mut State, history: &mut Vec<f64>) {
    let projected = project_positive(&state.u);
    let Some(dr) = quotient_change(problem, state, &projected) else {
        return;
    };
    if dr <= 0.0 {
        if let Some(next) = evaluate(problem, projected, Some(state.lambda + dr)) {
            *state = next;
            history.push(state.lambda);
        }
    }
}

pub(crate) fn minimize(
    problem: &mut dyn RayleighProblem,
    init: Vec<f64>,
    opts: &SolveOptions,
    positivity: bool,
) -> Option<DescentOutcome> {
    let n = problem.dim();
    let p = problem.p();
    let reweight = p != 2.0;
    if reweight {
        problem.refresh(&init);
    }
    let mut state = evaluate(problem, init, None)?;
    let mut history = vec![state.lambda];
    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut ps = vec![0.0; n];
    let mut tau = 1.0 / p;
    let mut stagnant = 0;
    let mut iterations = 0;
    let stop = loop {
        let residual = norm_inf(&state.g);
        if residual <= opts.tol_residual * state.lambda.abs().max(1.0) {
            break StopReason::Converged;
        }
        if iterations >= opts.max_iters {
            break StopReason::MaxIterations;
        }
        iterations += 1;
        if reweight && iterations % REFRESH_PERIOD == 0 {
            problem.refresh(&state.u);
        }

        problem.precondition(&state.g, &mut d);
        let slope = dot(&state.g, &d);
        if !(slope > 0.0) {
            break StopReason::LineSearchFailure;
        }
        let mut accepted = None;
        let mut step = tau;
        for _ in 0..MAX_BACKTRACKS {
            for ((t, u), di) in trial.iter_mut().zip(&state.u).zip(&d) {
                *t = u - step * di;
            }
            if let Some(dr) = quotient_change(problem, &state, &trial) {
                if dr <= -opts.armijo_c * step * slope {
                    accepted = Some((step, dr));
                    break;
                }
            }
            step *= opts.armijo_shrink;
        }
        let Some((step, dr)) = accepted else {
            break StopReason::LineSearchFailure;
        };
        let Some(next) = evaluate(problem, trial.clone(), Some(state.lambda + dr)) else {
            break StopReason::LineSearchFailure;
        };

        // Barzilai–Borwein seed in the preconditioner metric
        let s: Vec<f64> = next.u.iter().zip(&state.u).map(|(a, b)| a - b).collect();
        let sy: f64 = s
            .iter()
            .zip(next.g.iter().zip(&state.g))
            .map(|(si, (gn, go))| si * (gn - go))
            .sum();
        problem.metric(&s, &mut ps);
        let sps = dot(&s, &ps);
        tau = if sy > 0.0 && sps > 0.0 {
            (sps / sy).clamp(1e-6 * step, 1e6 * step.max(1e-12))
        } else {
            2.0 * step
        };

        let decrease = -dr / state.lambda.abs().max(f64::MIN_POSITIVE);
        stagnant = if decrease < opts.tol_stagnation {
            stagnant + 1
        } else {
            0
        };
        state = next;
        history.push(state.lambda);
        if stagnant >= STAGNATION_WINDOW {
            break StopReason::Stagnation;
        }

        if positivity && iterations % POSITIVITY_PERIOD == 0 {
            try_projection(problem, &mut state, &mut history);
        }
    };

    if positivity {
        if state.u.iter().sum::<f64>() < 0.0 {
            state.u.iter_mut().for_each(|v| *v = -*v);
            state.g.iter_mut().for_each(|v| *v = -*v);
        }
        if state.u.iter().any(|v| *v < 0.0) {
            try_projection(problem, &mut state, &mut history);
        }
    }

    Some(DescentOutcome {
        lambda: state.lambda,
        residual: norm_inf(&state.g),
        u: state.u,
        iterations,
        history,
        stop,
    })
}
