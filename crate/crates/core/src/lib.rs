//! Learning a single affine corruption recovery transform from paired
//! corrupted/clean image collections, plus the surrounding tooling: matrix
//! and dataset I/O, proximal operators, a robust low-rank ALM solver, RPCA
//! ground-truth synthesis, synthetic corruption generators, classifiers, and
//! a cross-validation harness.
//!
//! Images are stored as the columns of a dense `p x n` matrix (`p = height *
//! width`, row-major vectorization of each image). All computation is `f64`
//! and deterministic for fixed inputs and seeds.

pub mod classify;
pub mod corruption;
pub mod error;
pub mod harness;
pub mod io;
pub mod prox;
pub mod rpca;
pub mod solver;

/// Dense real matrix, column-major. Columns are samples (vectorized images).
pub type Matrix = nalgebra::DMatrix<f64>;

/// Dense real column vector, typically one vectorized image.
pub type Vector = nalgebra::DVector<f64>;

pub use error::{CrtError, Result};
pub use io::{DatasetManifest, LabeledDataset, MatrixFormat};
pub use solver::{CrtModel, LossMode, SolverConfig, SolverReport};
