//! Lowest eigenpairs of the `p = 2` problem `K v = λ M v` by shift-inverted
//! subspace iteration with Rayleigh–Ritz extraction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use sprs::CsMat;

use super::cross::ground_state_unchecked;
use super::{EigenResult, SolveOptions, StopReason};
use crate::coeffs::CoefficientField;
use crate::discretization::{assemble_p2, csr_mul, DiscreteField, QuadratureRule};
use crate::error::{Error, Result};
use crate::linalg::{dot, BandedCholesky};
use crate::mesh::CylinderMesh;

const WARMUP_ITERS: usize = 8;

fn shifted(k: &CsMat<f64>, m: &CsMat<f64>, sigma: f64) -> CsMat<f64> {
    if sigma == 0.0 {
        return k.clone();
    }
    let scaled = m.map(|v| -sigma * v);
    k + &scaled
}

/// Deterministic start block: `W(x2) cos(mπt)` axial modes first, then the
/// second cross-section shape times the same axial modes.
fn start_block(mesh: &CylinderMesh, coeffs: &CoefficientField, b: usize) -> Result<Vec<Vec<f64>>> {
    let cross = ground_state_unchecked(mesh.n2(), coeffs, 2.0)?;
    let w = cross.w();
    let (lo, hi) = mesh.x1_range();
    let n_axial = (2 * b).div_ceil(3);
    let stride = mesh.n2() + 1;
    let cols = (0..b)
        .map(|c| {
            let (m, second) = if c < n_axial {
                (c, false)
            } else {
                (c - n_axial, true)
            };
            mesh.dof_nodes()
                .iter()
                .map(|&node| {
                    let (i, j) = (node / stride, node % stride);
                    let t = (mesh.x1(i) - lo) / (hi - lo);
                    let across = if second {
                        (2.0 * PI * (mesh.x2(j) + 0.5)).sin()
                    } else {
                        w[j]
                    };
                    across * (m as f64 * PI * t).cos()
                })
                .collect()
        })
        .collect();
    Ok(cols)
}

/// Two passes of classical Gram–Schmidt in the `M` inner product. Columns
/// that collapse are replaced by a deterministic perturbation of the
/// previous column.
fn m_orthonormalize(cols: &mut [Vec<f64>], m: &CsMat<f64>) {
    let n = cols.first().map_or(0, Vec::len);
    let mut mx = vec![0.0; n];
    for c in 0..cols.len() {
        for _pass in 0..2 {
            csr_mul(m, &cols[c], &mut mx);
            for prev in 0..c {
                let r = dot(&cols[prev], &mx);
                let (head, tail) = cols.split_at_mut(c);
                tail[0]
                    .iter_mut()
                    .zip(&head[prev])
                    .for_each(|(v, q)| *v -= r * q);
            }
        }
        csr_mul(m, &cols[c], &mut mx);
        let mut norm = dot(&cols[c], &mx).max(0.0).sqrt();
        if norm < 1e-300 {
            cols[c] = (0..n).map(|i| ((i * (c + 7)) as f64).sin()).collect();
            csr_mul(m, &cols[c], &mut mx);
            norm = dot(&cols[c], &mx).sqrt();
        }
        cols[c].iter_mut().for_each(|v| *v /= norm);
    }
}

/// Ritz values and vectors of `(K, M)` on the span of `M`-orthonormal `cols`.
fn rayleigh_ritz(cols: &[Vec<f64>], k: &CsMat<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let b = cols.len();
    let n = cols[0].len();
    let kx: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let mut out = vec![0.0; n];
            csr_mul(k, c, &mut out);
            out
        })
        .collect();
    let kr = DMatrix::from_fn(b, b, |r, c| {
        0.5 * (dot(&cols[r], &kx[c]) + dot(&cols[c], &kx[r]))
    });
    let eig = SymmetricEigen::new(kr);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v = vec![0.0; n];
            for (r, col) in cols.iter().enumerate() {
                let coef = eig.eigenvectors[(r, i)];
                v.iter_mut().zip(col).for_each(|(a, x)| *a += coef * x);
            }
            v
        })
        .collect();
    (values, vectors)
}

/// `2 (K v - λ M v)`, the gradient residual of the quotient at unit mass.
fn residual(k: &CsMat<f64>, m: &CsMat<f64>, v: &[f64], lambda: f64) -> f64 {
    let n = v.len();
    let (mut kv, mut mv) = (vec![0.0; n], vec![0.0; n]);
    csr_mul(k, v, &mut kv);
    csr_mul(m, v, &mut mv);
    2.0 * kv
        .iter()
        .zip(&mv)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - lambda * b).abs()))
}

/// The `k` lowest eigenpairs of the `p = 2` problem, ascending, each
/// normalized to `vᵀ M v = 1` with nonnegative coefficient sum.
pub fn linear_spectrum(
    mesh: &CylinderMesh,
    coeffs: &CoefficientField,
    k: usize,
    opts: &SolveOptions,
) -> Result<Vec<EigenResult>> {
    opts.validate()?;
    let n = mesh.free_dofs();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "requested {k} eigenpairs from a problem with {n} unknowns"
        )));
    }
    let b = (2 * k + 4).min(n);
    let pair = assemble_p2(mesh, coeffs, &QuadratureRule::default())?;
    let (kmat, mmat) = (&pair.stiffness, &pair.mass);

    let mut cols = start_block(mesh, coeffs, b)?;
    m_orthonormalize(&mut cols, mmat);
    let (mut theta, mut ritz) = rayleigh_ritz(&cols, kmat);

    let apply = |factor: &BandedCholesky, cols: &mut Vec<Vec<f64>>| {
        let mut mx = vec![0.0; n];
        for c in cols.iter_mut() {
            csr_mul(mmat, c, &mut mx);
            factor.solve(&mx, c);
        }
    };

    // a few unshifted sweeps to locate the bottom of the spectrum
    let plain = BandedCholesky::factor(kmat)?;
    for _ in 0..WARMUP_ITERS {
        cols = ritz;
        apply(&plain, &mut cols);
        m_orthonormalize(&mut cols, mmat);
        (theta, ritz) = rayleigh_ritz(&cols, kmat);
    }

    // Ritz values bound from above, so back off until K - σM is definite
    let mut gap = 0.05;
    let factor = loop {
        let sigma = theta[0] * (1.0 - gap);
        match BandedCholesky::factor(&shifted(kmat, mmat, sigma)) {
            Ok(f) => break f,
            Err(_) if gap < 0.9 => gap = (gap * 3.0).min(0.95),
            Err(_) => break plain,
        }
    };

    let mut histories: Vec<Vec<f64>> = (0..k).map(|i| vec![theta[i]]).collect();
    let mut iterations = WARMUP_ITERS;
    let mut residuals: Vec<f64>;
    let stop = loop {
        residuals = (0..k)
            .map(|i| residual(kmat, mmat, &ritz[i], theta[i]))
            .collect();
        let done = (0..k).all(|i| residuals[i] <= opts.tol_residual * theta[i].abs().max(1.0));
        if done {
            break StopReason::Converged;
        }
        if iterations >= opts.max_iters {
            break StopReason::MaxIterations;
        }
        iterations += 1;
        cols = ritz;
        apply(&factor, &mut cols);
        m_orthonormalize(&mut cols, mmat);
        (theta, ritz) = rayleigh_ritz(&cols, kmat);
        histories
            .iter_mut()
            .zip(&theta)
            .for_each(|(h, t)| h.push(*t));
    };

    let results = ritz
        .into_iter()
        .take(k)
        .zip(theta)
        .zip(histories)
        .zip(residuals)
        .map(|(((mut v, lambda), history), res)| {
            if v.iter().sum::<f64>() < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            let converged = res <= opts.tol_residual * lambda.abs().max(1.0);
            EigenResult {
                lambda,
                field: DiscreteField {
                    values: v,
                    mesh_id: mesh.id(),
                },
                iterations,
                final_residual: res,
                rayleigh_history: history,
                converged,
                stop_reason: if converged {
                    StopReason::Converged
                } else {
                    stop
                },
            }
        })
        .collect();
    Ok(results)
}
