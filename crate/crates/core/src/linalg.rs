//! Banded Cholesky factorization for the structured stiffness matrices.
//!
//! With axial-major DOF numbering the Q1 matrices have half-bandwidth about
//! `nx2`, so a band factorization costs `O(n * nx2^2)` and each solve
//! `O(n * nx2)`.

use sprs::CsMat;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// row `i` holds `L[i][i-bw..=i]` at offsets `0..=bw`
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factors a symmetric positive definite CSR matrix (only the lower
    /// triangle is read).
    pub fn factor(a: &CsMat<f64>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: a.cols(),
            });
        }
        let csr = if a.is_csr() { a.clone() } else { a.to_csr() };
        let mut bw = 0;
        for (row, vec) in csr.outer_iterator().enumerate() {
            for (col, _) in vec.iter() {
                if col <= row {
                    bw = bw.max(row - col);
                }
            }
        }
        let width = bw + 1;
        let mut l = vec![0.0; n * width];
        for (row, vec) in csr.outer_iterator().enumerate() {
            for (col, &v) in vec.iter() {
                if col <= row {
                    l[row * width + (col + bw - row)] += v;
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut sum = l[i * width + (j + bw - i)];
                for k in lo..j {
                    sum -= l[i * width + (k + bw - i)] * l[j * width + (k + bw - j)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::Solver(format!(
                            "matrix is not positive definite (pivot {sum:.3e} at row {i})"
                        )));
                    }
                    l[i * width + bw] = sum.sqrt();
                } else {
                    l[i * width + (j + bw - i)] = sum / l[j * width + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let (n, bw, width) = (self.n, self.bw, self.bw + 1);
        x[..n].copy_from_slice(&b[..n]);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[i * width + (k + bw - i)] * x[k];
            }
            x[i] = s / self.l[i * width + bw];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            let hi = (i + bw).min(n - 1);
            for k in (i + 1)..=hi {
                s -= self.l[k * width + (i + bw - k)] * x[k];
            }
            x[i] = s / self.l[i * width + bw];
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sprs::TriMat;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 20;
        let mut t = TriMat::new((n, n));
        for i in 0..n {
            t.add_triplet(i, i, 2.0);
            if i + 1 < n {
                t.add_triplet(i, i + 1, -1.0);
                t.add_triplet(i + 1, i, -1.0);
            }
        }
        let a: CsMat<f64> = t.to_csr();
        let chol = BandedCholesky::factor(&a).unwrap();
        assert_eq!(chol.bandwidth(), 1);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        crate::discretization::csr_mul(&a, &x_true, &mut b);
        let mut x = vec![0.0; n];
        chol.solve(&b, &mut x);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mut t = TriMat::new((2, 2));
        t.add_triplet(0, 0, 1.0);
        t.add_triplet(0, 1, 2.0);
        t.add_triplet(1, 0, 2.0);
        t.add_triplet(1, 1, 1.0);
        assert!(matches!(
            BandedCholesky::factor(&t.to_csr()),
            Err(Error::Solver(_))
        ));
    }

    #[test]
    fn matches_dense_solve_on_wide_band() {
        let n = 30;
        let bw = 5;
        let mut t = TriMat::new((n, n));
        for i in 0..n {
            t.add_triplet(i, i, 10.0 + i as f64 * 0.1);
            for d in 1..=bw {
                if i + d < n {
                    let v = 1.0 / (1.0 + d as f64 + (i % 3) as f64);
                    t.add_triplet(i, i + d, v);
                    t.add_triplet(i + d, i, v);
                }
            }
        }
        let a: CsMat<f64> = t.to_csr();
        let dense = nalgebra::DMatrix::from_fn(n, n, |r, c| *a.get(r, c).unwrap_or(&0.0));
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let expected = dense
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_vec(b.clone()));
        let mut x = vec![0.0; n];
        BandedCholesky::factor(&a).unwrap().solve(&b, &mut x);
        for i in 0..n {
            assert!((x[i] - expected[i]).abs() < 1e-12);
        }
    }
}
