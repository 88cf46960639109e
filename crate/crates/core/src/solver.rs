//! Learning a corruption recovery transform `A` from paired clean/noisy
//! training matrices, either by the ridge closed form or by an augmented
//! Lagrange multiplier (ALM) scheme for the robust objective
//!
//! ```text
//!   min_A  loss(Z0 - A Z) + lambda * ||A||_*
//! ```
//!
//! with `loss` the l2,1 norm (per-sample robust) or the squared Frobenius
//! norm. The ALM splitting introduces `F = A` (nuclear term) and
//! `E = Z0 - A Z` (loss term); each sub-step has a closed form: singular
//! value thresholding for `F`, column shrinkage for `E`, and an SPD solve
//! for `A`. The penalty grows geometrically, `mu <- min(rho * mu, mu_max)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Cholesky;

use crate::error::{CrtError, Result};
use crate::io::{self, MatrixFormat};
use crate::prox::{norm_l21, prox_l21_columns, prox_nuclear, singular_values};
use crate::Matrix;

/// Which data-fit loss the transform was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Sum of per-column residual norms; robust to corrupted samples.
    L21,
    /// Squared Frobenius residual.
    Frobenius,
    /// Unregularized least squares (closed form).
    Ridge,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::L21 => "l21",
            LossMode::Frobenius => "frobenius",
            LossMode::Ridge => "ridge",
        })
    }
}

impl FromStr for LossMode {
    type Err = CrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l21" => Ok(LossMode::L21),
            "frobenius" => Ok(LossMode::Frobenius),
            "ridge" => Ok(LossMode::Ridge),
            other => Err(CrtError::InvalidArgument(format!(
                "unknown loss mode {other:?} (expected l21, frobenius, or ridge)"
            ))),
        }
    }
}

/// A learned recovery transform with its training metadata.
#[derive(Debug, Clone)]
pub struct CrtModel {
    /// The `p x p` transform applied to corrupted columns.
    pub transform: Matrix,
    /// Regularization weight (the ridge jitter `epsilon` for `Ridge` mode).
    pub lambda: f64,
    pub loss_mode: LossMode,
    /// Signal dimension `p`.
    pub dim: usize,
    /// Solver iterations that produced the transform (0 for closed forms).
    pub iterations: usize,
    pub converged: bool,
}

/// ALM hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    /// Relative residual threshold for both constraints.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu0: 1e-6,
            rho: 1.2,
            mu_max: 1e10,
            tol: 1e-7,
            max_iter: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(CrtError::InvalidArgument("mu0 must be > 0".to_string()));
        }
        if !(self.rho > 1.0) {
            return Err(CrtError::InvalidArgument("rho must be > 1".to_string()));
        }
        if !(self.mu_max >= self.mu0) {
            return Err(CrtError::InvalidArgument(
                "mu_max must be >= mu0".to_string(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(CrtError::InvalidArgument("tol must be > 0".to_string()));
        }
        if self.max_iter == 0 {
            return Err(CrtError::InvalidArgument(
                "max_iter must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One ALM iteration of the trace.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    /// Objective of the trained problem at the current transform.
    pub objective: f64,
    /// Relative residual of `A = F`: `||A - F||_F / max(1, ||F||_F)`.
    pub transform_gap: f64,
    /// Relative residual of `E = Z0 - A Z`: `||Z0 - A Z - E||_F / max(1, ||Z0||_F)`.
    pub fit_gap: f64,
    /// Penalty value in effect during this iteration.
    pub mu: f64,
}

/// Per-fit convergence record.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub iterations: usize,
    pub trace: Vec<IterationStats>,
    pub converged: bool,
}

fn check_training_shapes(clean: &Matrix, noisy: &Matrix) -> Result<()> {
    if clean.shape() != noisy.shape() {
        return Err(CrtError::DimensionMismatch(format!(
            "clean is {:?}, noisy is {:?}",
            clean.shape(),
            noisy.shape()
        )));
    }
    if clean.is_empty() {
        return Err(CrtError::InvalidArgument(
            "empty training matrices".to_string(),
        ));
    }
    Ok(())
}

/// Least-squares transform `A = Z0 Z^T (Z Z^T + epsilon I)^{-1}`.
///
/// `epsilon` is a diagonal jitter for rank-deficient `Z Z^T`; with
/// `epsilon = 0` the Gram matrix must be positive definite.
pub fn fit_ridge(clean: &Matrix, noisy: &Matrix, epsilon: f64) -> Result<CrtModel> {
    check_training_shapes(clean, noisy)?;
    if epsilon < 0.0 {
        return Err(CrtError::InvalidArgument("epsilon must be >= 0".to_string()));
    }
    let p = clean.nrows();
    let mut gram = noisy * noisy.transpose();
    for i in 0..p {
        gram[(i, i)] += epsilon;
    }
    let singular = || {
        CrtError::SingularSystem("Z Z^T is not positive definite; pass epsilon > 0".to_string())
    };
    let chol = Cholesky::new(gram).ok_or_else(singular)?;
    // The factorization itself tolerates tiny pivots; reject those too, since
    // the solve would amplify roundoff into garbage.
    let diag = chol.l_dirty();
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..p {
        dmin = dmin.min(diag[(i, i)]);
        dmax = dmax.max(diag[(i, i)]);
    }
    if !(dmin > 1e-7 * dmax) {
        return Err(singular());
    }
    let cross = clean * noisy.transpose();
    let transform = chol.solve(&cross.transpose()).transpose();
    Ok(CrtModel {
        transform,
        lambda: epsilon,
        loss_mode: LossMode::Ridge,
        dim: p,
        iterations: 0,
        converged: true,
    })
}

/// Nuclear-term sub-step: `prox` of the nuclear norm at `A + dual/mu` with
/// threshold `lambda / mu`.
pub fn step_low_rank(
    transform: &Matrix,
    dual_transform: &Matrix,
    mu: f64,
    lambda: f64,
) -> Result<Matrix> {
    assert!(mu > 0.0, "mu must be positive");
    prox_nuclear(&(transform + dual_transform / mu), lambda / mu)
}

/// Loss-term sub-step: column shrinkage of `Z0 - A Z + dual/mu` at `1/mu`.
pub fn step_error(
    clean: &Matrix,
    noisy: &Matrix,
    transform: &Matrix,
    dual_fit: &Matrix,
    mu: f64,
) -> Matrix {
    assert!(mu > 0.0, "mu must be positive");
    let anchor = clean - transform * noisy + dual_fit / mu;
    prox_l21_columns(&anchor, 1.0 / mu)
}

fn transform_numerator(
    clean: &Matrix,
    noisy_t: &Matrix,
    error: &Matrix,
    low_rank: &Matrix,
    dual_transform: &Matrix,
    dual_fit: &Matrix,
    mu: f64,
) -> Matrix {
    low_rank + (clean - error + dual_fit / mu) * noisy_t - dual_transform / mu
}

/// Transform sub-step: the stationary point
/// `A = [F + (Z0 - E + dual_fit/mu) Z^T - dual_transform/mu] (I + Z Z^T)^{-1}`.
pub fn step_transform(
    clean: &Matrix,
    noisy: &Matrix,
    error: &Matrix,
    low_rank: &Matrix,
    dual_transform: &Matrix,
    dual_fit: &Matrix,
    mu: f64,
) -> Result<Matrix> {
    assert!(mu > 0.0, "mu must be positive");
    let p = noisy.nrows();
    let gram = Matrix::identity(p, p) + noisy * noisy.transpose();
    let chol = Cholesky::new(gram)
        .ok_or_else(|| CrtError::SingularSystem("I + Z Z^T factorization failed".to_string()))?;
    let numerator = transform_numerator(
        clean,
        &noisy.transpose(),
        error,
        low_rank,
        dual_transform,
        dual_fit,
        mu,
    );
    Ok(chol.solve(&numerator.transpose()).transpose())
}

/// Objective of the training problem at a candidate transform:
/// `loss(Z0 - A Z) + lambda * ||A||_*`, where the loss is the l2,1 norm or
/// the squared Frobenius norm. `Ridge` mode is the plain squared residual.
pub fn objective(
    clean: &Matrix,
    noisy: &Matrix,
    transform: &Matrix,
    lambda: f64,
    loss_mode: LossMode,
) -> Result<f64> {
    let residual = clean - transform * noisy;
    Ok(match loss_mode {
        LossMode::L21 => norm_l21(&residual) + lambda * singular_values(transform)?.sum(),
        LossMode::Frobenius => {
            residual.norm_squared() + lambda * singular_values(transform)?.sum()
        }
        LossMode::Ridge => residual.norm_squared(),
    })
}

/// Learn a robust recovery transform by ALM.
///
/// Iterates the three closed-form sub-steps and the multiplier updates until
/// both relative residuals fall to `config.tol` or `config.max_iter` is
/// reached. Non-convergence is not an error: the best iterate seen (smallest
/// maximum residual) is returned with `converged = false` in the report.
pub fn fit_robust(
    clean: &Matrix,
    noisy: &Matrix,
    lambda: f64,
    loss_mode: LossMode,
    config: &SolverConfig,
) -> Result<(CrtModel, SolverReport)> {
    check_training_shapes(clean, noisy)?;
    config.validate()?;
    if !(lambda >= 0.0) {
        return Err(CrtError::InvalidArgument("lambda must be >= 0".to_string()));
    }
    if loss_mode == LossMode::Ridge {
        return Err(CrtError::InvalidArgument(
            "ridge mode has a closed form; use fit_ridge".to_string(),
        ));
    }

    let p = clean.nrows();
    let m = clean.ncols();
    let noisy_t = noisy.transpose();
    // Z is constant, so the SPD factor is computed once and reused.
    let gram = Matrix::identity(p, p) + noisy * &noisy_t;
    let chol = Cholesky::new(gram)
        .ok_or_else(|| CrtError::SingularSystem("I + Z Z^T factorization failed".to_string()))?;
    let clean_scale = clean.norm().max(1.0);

    let mut transform = Matrix::zeros(p, p);
    let mut dual_transform = Matrix::zeros(p, p);
    let mut dual_fit = Matrix::zeros(p, m);
    let mut mu = config.mu0;

    let mut trace = Vec::new();
    let mut converged = false;
    let mut best = (f64::INFINITY, transform.clone());

    for _ in 0..config.max_iter {
        let low_rank = step_low_rank(&transform, &dual_transform, mu, lambda)?;

        let anchor = clean - &transform * noisy + &dual_fit / mu;
        let error = match loss_mode {
            LossMode::L21 => prox_l21_columns(&anchor, 1.0 / mu),
            LossMode::Frobenius => anchor * (mu / (2.0 + mu)),
            LossMode::Ridge => unreachable!(),
        };

        let numerator = transform_numerator(
            clean,
            &noisy_t,
            &error,
            &low_rank,
            &dual_transform,
            &dual_fit,
            mu,
        );
        transform = chol.solve(&numerator.transpose()).transpose();

        let recovered = &transform * noisy;
        let gap_transform = &transform - &low_rank;
        let gap_fit = clean - &recovered - &error;
        let transform_gap = gap_transform.norm() / low_rank.norm().max(1.0);
        let fit_gap = gap_fit.norm() / clean_scale;

        dual_transform += &gap_transform * mu;
        dual_fit += &gap_fit * mu;

        let residual = clean - recovered;
        let loss = match loss_mode {
            LossMode::L21 => norm_l21(&residual),
            _ => residual.norm_squared(),
        };
        let obj = loss + lambda * singular_values(&transform)?.sum();
        trace.push(IterationStats {
            objective: obj,
            transform_gap,
            fit_gap,
            mu,
        });

        let worst = transform_gap.max(fit_gap);
        if worst <= best.0 {
            best = (worst, transform.clone());
        }
        if transform_gap <= config.tol && fit_gap <= config.tol {
            converged = true;
            break;
        }
        mu = (config.rho * mu).min(config.mu_max);
    }

    let iterations = trace.len();
    let final_transform = if converged { transform } else { best.1 };
    Ok((
        CrtModel {
            transform: final_transform,
            lambda,
            loss_mode,
            dim: p,
            iterations,
            converged,
        },
        SolverReport {
            iterations,
            trace,
            converged,
        },
    ))
}

/// Apply the transform to a batch of corrupted columns.
pub fn recover(model: &CrtModel, x: &Matrix) -> Result<Matrix> {
    if x.nrows() != model.dim {
        return Err(CrtError::DimensionMismatch(format!(
            "model expects {} rows, input has {}",
            model.dim,
            x.nrows()
        )));
    }
    Ok(&model.transform * x)
}

/// Render the first `count` columns of the transform as PGM images in `dir`
/// (`basis_0000.pgm`, `basis_0001.pgm`, ...).
pub fn export_basis(
    model: &CrtModel,
    height: usize,
    width: usize,
    dir: &Path,
    count: usize,
) -> Result<()> {
    if height * width != model.dim {
        return Err(CrtError::DimensionMismatch(format!(
            "{height} x {width} != signal dimension {}",
            model.dim
        )));
    }
    if count == 0 || count > model.dim {
        return Err(CrtError::InvalidArgument(format!(
            "count must be in 1..={}",
            model.dim
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| CrtError::io(dir, e))?;
    for k in 0..count {
        let col: Vec<f64> = model.transform.column(k).iter().copied().collect();
        let path = dir.join(format!("basis_{k:04}.pgm"));
        io::export_image_pgm(&col, height, width, &path)?;
    }
    Ok(())
}

const MODEL_MATRIX: &str = "transform.crtm";
const MODEL_META: &str = "model.meta";

/// Persist a model as a matrix file plus a `key=value` metadata sidecar.
pub fn save_model(model: &CrtModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CrtError::io(dir, e))?;
    io::save_matrix(&model.transform, &dir.join(MODEL_MATRIX), MatrixFormat::Binary)?;
    let meta = format!(
        "lambda={:.16e}\nloss_mode={}\np={}\niterations={}\nconverged={}\n",
        model.lambda, model.loss_mode, model.dim, model.iterations, model.converged,
    );
    std::fs::write(dir.join(MODEL_META), meta).map_err(|e| CrtError::io(dir, e))
}

/// Load a model saved by [`save_model`].
pub fn load_model(dir: &Path) -> Result<CrtModel> {
    let transform = io::load_matrix(&dir.join(MODEL_MATRIX), MatrixFormat::Binary)?;
    let meta_path = dir.join(MODEL_META);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| CrtError::io(&meta_path, e))?;
    let mut lambda = None;
    let mut loss_mode = None;
    let mut dim = None;
    let mut iterations = 0usize;
    let mut converged = true;
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let bad = |what: &str| CrtError::parse(&meta_path, format!("bad {what}: {value:?}"));
        match key {
            "lambda" => lambda = Some(value.parse().map_err(|_| bad("lambda"))?),
            "loss_mode" => loss_mode = Some(value.parse()?),
            "p" => dim = Some(value.parse().map_err(|_| bad("p"))?),
            "iterations" => iterations = value.parse().map_err(|_| bad("iterations"))?,
            "converged" => converged = value.parse().map_err(|_| bad("converged"))?,
            _ => {}
        }
    }
    let dim = dim.ok_or_else(|| CrtError::parse(&meta_path, "missing key p"))?;
    if transform.nrows() != dim || transform.ncols() != dim {
        return Err(CrtError::DimensionMismatch(format!(
            "metadata says p={dim} but transform is {:?}",
            transform.shape()
        )));
    }
    Ok(CrtModel {
        transform,
        lambda: lambda.ok_or_else(|| CrtError::parse(&meta_path, "missing key lambda"))?,
        loss_mode: loss_mode.ok_or_else(|| CrtError::parse(&meta_path, "missing key loss_mode"))?,
        dim,
        iterations,
        converged,
    })
}
