//! Robust principal component analysis: split a data matrix into a low-rank
//! part `Y` and an entrywise-sparse part `S` with `X = Y + S`, by ALM on
//!
//! ```text
//!   min  ||Y||_* + lambda * ||S||_1   s.t.  X = Y + S
//! ```
//!
//! The `Y` step is singular value thresholding, the `S` step entrywise soft
//! thresholding, with the same geometric penalty schedule as the transform
//! solver. The low-rank part serves as approximate clean training data when
//! no ground truth exists.

use crate::error::{CrtError, Result};
use crate::io::LabeledDataset;
use crate::prox::{norm_nuclear, prox_nuclear, soft_threshold};
use crate::solver::{IterationStats, SolverConfig, SolverReport};
use crate::Matrix;

/// Low-rank/sparse split of a data matrix.
#[derive(Debug, Clone)]
pub struct RpcaResult {
    pub low_rank: Matrix,
    /// `X - low_rank`, exact by construction.
    pub sparse: Matrix,
    pub report: SolverReport,
}

/// The usual default weight, `1 / sqrt(max(rows, cols))`.
pub fn rpca_default_lambda(rows: usize, cols: usize) -> f64 {
    assert!(rows > 0 && cols > 0, "dimensions must be positive");
    1.0 / (rows.max(cols) as f64).sqrt()
}

/// Decompose `x` into low-rank plus sparse parts.
///
/// Non-convergence is flagged in the report rather than raised. On return
/// `low_rank + sparse == x` holds bitwise (the sparse part is snapped to the
/// exact residual after the last iteration).
pub fn rpca_decompose(x: &Matrix, lambda: f64, config: &SolverConfig) -> Result<RpcaResult> {
    if x.is_empty() {
        return Err(CrtError::InvalidArgument("empty input matrix".to_string()));
    }
    if !(lambda > 0.0) {
        return Err(CrtError::InvalidArgument("lambda must be > 0".to_string()));
    }
    config.validate()?;

    let scale = x.norm().max(1.0);
    let mut low_rank = Matrix::zeros(x.nrows(), x.ncols());
    let mut sparse = Matrix::zeros(x.nrows(), x.ncols());
    let mut dual = Matrix::zeros(x.nrows(), x.ncols());
    let mut mu = config.mu0;

    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iter {
        low_rank = prox_nuclear(&(x - &sparse + &dual / mu), 1.0 / mu)?;
        sparse = soft_threshold(&(x - &low_rank + &dual / mu), lambda / mu);

        let gap = x - &low_rank - &sparse;
        let residual = gap.norm() / scale;
        dual += &gap * mu;

        let objective =
            norm_nuclear(&low_rank)? + lambda * (x - &low_rank).iter().map(|v| v.abs()).sum::<f64>();
        trace.push(IterationStats {
            objective,
            transform_gap: 0.0,
            fit_gap: residual,
            mu,
        });
        if residual <= config.tol {
            converged = true;
            break;
        }
        mu = (config.rho * mu).min(config.mu_max);
    }

    let iterations = trace.len();
    let sparse = x - &low_rank;
    Ok(RpcaResult {
        low_rank,
        sparse,
        report: SolverReport {
            iterations,
            trace,
            converged,
        },
    })
}

/// Approximate clean training data: the low-rank component of the dataset.
/// A non-positive `lambda` selects the default weight.
pub fn synthesize_ground_truth(
    dataset: &LabeledDataset,
    lambda: f64,
    config: &SolverConfig,
) -> Result<Matrix> {
    let lambda = if lambda > 0.0 {
        lambda
    } else {
        rpca_default_lambda(dataset.data.nrows(), dataset.data.ncols())
    };
    Ok(rpca_decompose(&dataset.data, lambda, config)?.low_rank)
}
