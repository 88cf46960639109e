//! Shared generators for the benchmark suite.

use crt_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random matrix with entries in `[-1, 1)`.
pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Low-rank matrix plus entrywise spikes, the shape RPCA expects.
pub fn spiked_low_rank(seed: u64, n: usize, rank: usize, spike_every: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Matrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    let v = Matrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    let mut x = &u * v.transpose();
    for idx in (0..n * n).step_by(spike_every) {
        x[(idx % n, idx / n)] += 4.0;
    }
    x
}
