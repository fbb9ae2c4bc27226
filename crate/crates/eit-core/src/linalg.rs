//! Small dense/banded linear algebra helpers.
//!
//! The fine-grid finite-volume system is symmetric positive definite with
//! bandwidth equal to the angular node count, so a banded Cholesky
//! factorization is all we need; everything else in the crate is small and
//! dense (nalgebra).

use nalgebra::DMatrix;

use crate::error::{EitError, Result};

/// Cholesky factorization of a symmetric positive definite banded matrix.
///
/// Stores the lower factor in LAPACK-style band layout: row `i` holds
/// entries for columns `i-bw ..= i`.
pub struct BandedCholesky {
    dim: usize,
    bw: usize,
    // factor[i * (bw+1) + (j - i + bw)] = L[i][j] for j in [i-bw, i]
    factor: Vec<f64>,
}

impl BandedCholesky {
    /// Factorizes a banded SPD matrix given in the same band layout.
    ///
    /// `band[i*(bw+1) + (j-i+bw)]` must hold `A[i][j]` for `j in [i-bw, i]`
    /// (entries left of the band are ignored and may be arbitrary).
    pub fn new(dim: usize, bw: usize, band: &[f64]) -> Result<Self> {
        let stride = bw + 1;
        assert_eq!(band.len(), dim * stride);
        let mut l = band.to_vec();
        for i in 0..dim {
            let jmin = i.saturating_sub(bw);
            for j in jmin..=i {
                let kmin = jmin.max(j.saturating_sub(bw));
                let mut sum = l[i * stride + (j + bw - i)];
                for k in kmin..j {
                    sum -= l[i * stride + (k + bw - i)] * l[j * stride + (k + bw - j)];
                }
                if j == i {
                    if sum <= 0.0 {
                        return Err(EitError::SolveFailure(format!(
                            "banded Cholesky broke down at pivot {i} (value {sum:.3e})"
                        )));
                    }
                    l[i * stride + bw] = sum.sqrt();
                } else {
                    l[i * stride + (j + bw - i)] = sum / l[j * stride + bw];
                }
            }
        }
        Ok(Self { dim, bw, factor: l })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.dim);
        let stride = self.bw + 1;
        // forward: L y = b
        for i in 0..self.dim {
            let jmin = i.saturating_sub(self.bw);
            let mut sum = b[i];
            for j in jmin..i {
                sum -= self.factor[i * stride + (j + self.bw - i)] * b[j];
            }
            b[i] = sum / self.factor[i * stride + self.bw];
        }
        // backward: L^T x = y
        for i in (0..self.dim).rev() {
            let mut sum = b[i];
            let jmax = (i + self.bw).min(self.dim - 1);
            for j in (i + 1)..=jmax {
                sum -= self.factor[j * stride + (i + self.bw - j)] * b[j];
            }
            b[i] = sum / self.factor[i * stride + self.bw];
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Moore-Penrose pseudo-inverse applied to a vector, with singular values
/// truncated below `rel_tol` times the largest one.
pub fn pinv_apply(a: &DMatrix<f64>, b: &nalgebra::DVector<f64>, rel_tol: f64) -> nalgebra::DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let mut coeffs = u.transpose() * b;
    for (k, c) in coeffs.iter_mut().enumerate() {
        let s = svd.singular_values[k];
        *c = if s > rel_tol * smax { *c / s } else { 0.0 };
    }
    vt.transpose() * coeffs
}

/// Condition number (ratio of extreme singular values) of a dense matrix.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}
