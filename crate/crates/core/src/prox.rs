//! Matrix norms and the proximal operators used as closed-form solver steps:
//! singular value thresholding for the nuclear norm, column shrinkage for the
//! l2,1 norm, and entrywise soft thresholding for the l1 norm.
//!
//! The SVD is LAPACK's divide-and-conquer routine, run single-threaded so
//! results are deterministic for a fixed input. Each left singular vector is
//! sign-normalized (largest-magnitude entry nonnegative) to make factors
//! reproducible as well.

use std::sync::Once;

use lax::{layout::MatrixLayout, JobSvd, Lapack};
use nalgebra::DVector;

use crate::error::{CrtError, Result};
use crate::Matrix;

extern "C" {
    fn openblas_set_num_threads(num: i32);
}

static BLAS_INIT: Once = Once::new();

fn init_blas() {
    // Threaded BLAS reductions are not bit-reproducible across runs.
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Thin SVD `m = u * diag(sigma) * v^T` with `sigma` non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `rows x k` column-orthonormal.
    pub u: Matrix,
    /// Non-increasing, nonnegative singular values, `k = min(rows, cols)`.
    pub sigma: DVector<f64>,
    /// `cols x k` column-orthonormal.
    pub v: Matrix,
}

impl SvdFactors {
    /// `u * diag(sigma) * v^T`.
    pub fn reconstruct(&self) -> Matrix {
        let mut scaled = self.u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.sigma[j];
        }
        scaled * self.v.transpose()
    }
}

fn layout_of(m: &Matrix) -> MatrixLayout {
    MatrixLayout::F {
        col: m.ncols() as i32,
        lda: m.nrows() as i32,
    }
}

fn lapack_err(e: lax::error::Error) -> CrtError {
    match e {
        lax::error::Error::LapackComputationalFailure { return_code }
        | lax::error::Error::LapackInvalidValue { return_code } => {
            CrtError::SvdFailed(return_code)
        }
        lax::error::Error::InvalidShape => CrtError::SvdFailed(-1),
    }
}

/// Deterministic thin SVD of `m`.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    init_blas();
    if m.is_empty() {
        return Err(CrtError::InvalidArgument("svd of empty matrix".to_string()));
    }
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let mut a = m.as_slice().to_vec();
    let out = f64::svddc(layout_of(m), JobSvd::Some, &mut a).map_err(lapack_err)?;
    let mut u = Matrix::from_vec(rows, k, out.u.expect("requested U"));
    let vt = Matrix::from_vec(k, cols, out.vt.expect("requested V^T"));
    let mut v = vt.transpose();
    // Sign convention: largest-magnitude entry of each U column nonnegative.
    for j in 0..k {
        let col = u.column(j);
        let mut pivot = 0;
        for i in 1..rows {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if u[(pivot, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(SvdFactors {
        u,
        sigma: DVector::from_vec(out.s),
        v,
    })
}

/// Singular values of `m`, non-increasing.
pub fn singular_values(m: &Matrix) -> Result<DVector<f64>> {
    init_blas();
    if m.is_empty() {
        return Err(CrtError::InvalidArgument("svd of empty matrix".to_string()));
    }
    let mut a = m.as_slice().to_vec();
    let out = f64::svddc(layout_of(m), JobSvd::None, &mut a).map_err(lapack_err)?;
    Ok(DVector::from_vec(out.s))
}

/// l2,1 norm: sum over columns of Euclidean column norms.
pub fn norm_l21(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.norm()).sum()
}

/// Nuclear norm: sum of singular values.
pub fn norm_nuclear(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.sum())
}

/// Proximal operator of `tau * ||.||_*`: soft-thresholds the singular values
/// of `m` at `tau`.
pub fn prox_nuclear(m: &Matrix, tau: f64) -> Result<Matrix> {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    let mut f = svd(m)?;
    for s in f.sigma.iter_mut() {
        *s = (*s - tau).max(0.0);
    }
    Ok(f.reconstruct())
}

/// Proximal operator of `tau * ||.||_{2,1}`: shrinks each column's Euclidean
/// norm by `tau`, zeroing columns at or below the threshold.
pub fn prox_l21_columns(m: &Matrix, tau: f64) -> Matrix {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n <= tau {
            col.fill(0.0);
        } else {
            col *= 1.0 - tau / n;
        }
    }
    out
}

/// Proximal operator of `tau * ||.||_1`: entrywise soft threshold.
pub fn soft_threshold(m: &Matrix, tau: f64) -> Matrix {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    m.map(|x| x.signum() * (x.abs() - tau).max(0.0))
}
