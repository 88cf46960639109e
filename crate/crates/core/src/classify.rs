//! Classifiers used to score recovery quality: K nearest neighbors, sparse
//! representation classification (SRC), and a PCA baseline.
//!
//! SRC codes a query over the training columns by solving the l1-penalized
//! least-squares problem
//!
//! ```text
//!   min_a  0.5 * ||y - D a||_2^2 + gamma * ||a||_1
//! ```
//!
//! (columns of `D` normalized internally; the returned coefficients are in
//! the scale of the raw dictionary) and predicts the class whose columns
//! reconstruct the query best.

use nalgebra::DVector;

use crate::error::{CrtError, Result};
use crate::prox::{singular_values, svd};
use crate::{Matrix, Vector};

/// Majority class among the `k` nearest training columns (Euclidean).
///
/// Distance ties prefer the lower column index; vote ties go to the class of
/// the nearest member among the tied classes.
pub fn knn_classify(train: &Matrix, labels: &[usize], query: &Vector, k: usize) -> Result<usize> {
    let n = train.ncols();
    if n == 0 {
        return Err(CrtError::InvalidArgument("empty training set".to_string()));
    }
    if labels.len() != n {
        return Err(CrtError::DimensionMismatch(format!(
            "{} labels for {n} training columns",
            labels.len()
        )));
    }
    if k == 0 || k > n {
        return Err(CrtError::InvalidArgument(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    if query.len() != train.nrows() {
        return Err(CrtError::DimensionMismatch(format!(
            "query has {} rows, training data has {}",
            query.len(),
            train.nrows()
        )));
    }
    let mut order: Vec<(f64, usize)> = train
        .column_iter()
        .enumerate()
        .map(|(j, col)| ((col - query).norm_squared(), j))
        .collect();
    order.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let neighbors = &order[..k];

    let max_label = neighbors.iter().map(|&(_, j)| labels[j]).max().unwrap();
    let mut votes = vec![0usize; max_label + 1];
    for &(_, j) in neighbors {
        votes[labels[j]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    // first (= nearest) neighbor whose class holds the top vote count
    let winner = neighbors
        .iter()
        .map(|&(_, j)| labels[j])
        .find(|&c| votes[c] == top)
        .unwrap();
    Ok(winner)
}

/// Result of the l1 coding step.
#[derive(Debug, Clone)]
pub struct SrcFit {
    /// One coefficient per training column, raw-dictionary scale.
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Classification outcome of SRC for one query.
#[derive(Debug, Clone)]
pub struct SrcSolution {
    pub coefficients: DVector<f64>,
    /// Reconstruction residual using only each class's columns.
    pub residuals_per_class: Vec<f64>,
    /// `argmin` of the residuals, ties to the lowest class id.
    pub predicted: usize,
}

/// Conventional penalty weight for a query: `1e-3 * max_j |<d_j, y>|` over
/// unit-normalized dictionary columns.
pub fn src_default_gamma(dictionary: &Matrix, y: &Vector) -> f64 {
    let mut best: f64 = 0.0;
    for col in dictionary.column_iter() {
        let n = col.norm();
        if n > 0.0 {
            best = best.max((col.dot(y) / n).abs());
        }
    }
    1e-3 * best
}

fn subgradient_residual(grad: &DVector<f64>, alpha: &DVector<f64>, gamma: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..alpha.len() {
        let v = if alpha[i] != 0.0 {
            (grad[i] + gamma * alpha[i].signum()).abs()
        } else {
            (grad[i].abs() - gamma).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Sparse-code `y` over the dictionary columns.
///
/// Monotone accelerated iterative shrinkage with fixed step `1/L`,
/// `L = sigma_max(D)^2` after column normalization. Stops once the
/// subgradient optimality residual falls to 1e-6, else flags
/// `converged = false` after `max_iter` steps.
pub fn src_fit(dictionary: &Matrix, y: &Vector, gamma: f64, max_iter: usize) -> Result<SrcFit> {
    if dictionary.nrows() != y.len() {
        return Err(CrtError::DimensionMismatch(format!(
            "dictionary has {} rows, query has {}",
            dictionary.nrows(),
            y.len()
        )));
    }
    if !(gamma > 0.0) {
        return Err(CrtError::InvalidArgument("gamma must be > 0".to_string()));
    }
    let n = dictionary.ncols();
    let scales: Vec<f64> = dictionary
        .column_iter()
        .map(|c| {
            let s = c.norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut normalized = dictionary.clone();
    for (j, mut col) in normalized.column_iter_mut().enumerate() {
        col /= scales[j];
    }
    let lipschitz = singular_values(&normalized)?[0].powi(2);
    if lipschitz <= 0.0 {
        // all-zero dictionary: the zero code is optimal
        return Ok(SrcFit {
            coefficients: DVector::zeros(n),
            converged: true,
            iterations: 0,
        });
    }
    let step = 1.0 / lipschitz;
    let shrink = |v: &DVector<f64>, t: f64| v.map(|x| x.signum() * (x.abs() - t).max(0.0));
    let objective = |a: &DVector<f64>| {
        0.5 * (y - &normalized * a).norm_squared() + gamma * a.iter().map(|v| v.abs()).sum::<f64>()
    };

    const OPT_TOL: f64 = 1e-6;
    let mut best = DVector::zeros(n);
    let mut best_obj = objective(&best);
    let mut momentum = best.clone();
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..max_iter {
        iterations = iter + 1;
        let grad = normalized.transpose() * (&normalized * &momentum - y);
        let candidate = shrink(&(&momentum - &grad * step), gamma * step);

        let cand_obj = objective(&candidate);
        let prev_best = best.clone();
        if cand_obj <= best_obj {
            best = candidate.clone();
            best_obj = cand_obj;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        momentum = &best + (&candidate - &best) * (t / t_next) + (&best - &prev_best) * ((t - 1.0) / t_next);
        t = t_next;

        let grad_best = normalized.transpose() * (&normalized * &best - y);
        if subgradient_residual(&grad_best, &best, gamma) <= OPT_TOL {
            converged = true;
            break;
        }
    }

    let coefficients = DVector::from_fn(n, |i, _| best[i] / scales[i]);
    Ok(SrcFit {
        coefficients,
        converged,
        iterations,
    })
}

/// Class-restricted residual rule: reconstruct `y` from each class's columns
/// separately and predict the class with the smallest residual.
pub fn src_identity(
    dictionary: &Matrix,
    labels: &[usize],
    y: &Vector,
    alpha: &DVector<f64>,
) -> SrcSolution {
    assert_eq!(labels.len(), dictionary.ncols(), "one label per column");
    assert_eq!(alpha.len(), dictionary.ncols(), "one coefficient per column");
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut residuals = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut recon = DVector::zeros(y.len());
        for (j, &label) in labels.iter().enumerate() {
            if label == c && alpha[j] != 0.0 {
                recon += dictionary.column(j) * alpha[j];
            }
        }
        residuals.push((y - recon).norm());
    }
    let predicted = residuals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite residuals"))
        .map(|(c, _)| c)
        .unwrap_or(0);
    SrcSolution {
        coefficients: alpha.clone(),
        residuals_per_class: residuals,
        predicted,
    }
}

/// Mean image and top principal directions of a training matrix.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vector,
    /// `p x d`, column-orthonormal.
    pub components: Matrix,
}

/// Top-`dim` left singular vectors of the mean-centered data.
pub fn pca_fit(train: &Matrix, dim: usize) -> Result<PcaModel> {
    let (p, n) = train.shape();
    if dim == 0 || dim > p.min(n) {
        return Err(CrtError::InvalidArgument(format!(
            "dimension must be in 1..={}, got {dim}",
            p.min(n)
        )));
    }
    let mut mean = Vector::zeros(p);
    for col in train.column_iter() {
        mean += col;
    }
    mean /= n as f64;
    let mut centered = train.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let factors = svd(&centered)?;
    Ok(PcaModel {
        mean,
        components: factors.u.columns(0, dim).into_owned(),
    })
}

/// Project one vector into the principal subspace.
pub fn pca_project(model: &PcaModel, x: &Vector) -> Vector {
    model.components.transpose() * (x - &model.mean)
}

/// Project every column of a matrix.
pub fn pca_project_matrix(model: &PcaModel, x: &Matrix) -> Matrix {
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &model.mean;
    }
    model.components.transpose() * centered
}

/// Map projected coordinates back to image space.
pub fn pca_reconstruct(model: &PcaModel, projected: &Matrix) -> Matrix {
    let mut out = &model.components * projected;
    for mut col in out.column_iter_mut() {
        col += &model.mean;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn unit_columns(m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        out
    }

    #[test]
    fn knn_single_training_point() {
        let train = Matrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let query = Vector::from_vec(vec![5.0, -3.0]);
        assert_eq!(knn_classify(&train, &[7], &query, 1).unwrap(), 7);
    }

    #[test]
    fn knn_majority_among_three() {
        let train = Matrix::from_columns(&[
            Vector::from_vec(vec![0.0, 0.1]),
            Vector::from_vec(vec![0.1, 0.0]),
            Vector::from_vec(vec![0.2, 0.2]),
            Vector::from_vec(vec![9.0, 9.0]),
        ]);
        let labels = [0, 0, 1, 1];
        let query = Vector::from_vec(vec![0.05, 0.05]);
        assert_eq!(knn_classify(&train, &labels, &query, 3).unwrap(), 0);
    }

    #[test]
    fn knn_vote_tie_goes_to_nearest_member() {
        // k = 2 with one neighbor of each class: class of the closest wins.
        let train = Matrix::from_columns(&[
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![2.0, 0.0]),
        ]);
        let labels = [1, 0];
        let query = Vector::from_vec(vec![0.0, 0.0]);
        assert_eq!(knn_classify(&train, &labels, &query, 2).unwrap(), 1);
    }

    #[test]
    fn knn_distance_tie_prefers_lower_index() {
        let train = Matrix::from_columns(&[
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![-1.0, 0.0]),
        ]);
        let labels = [3, 5];
        let query = Vector::from_vec(vec![0.0, 0.0]);
        assert_eq!(knn_classify(&train, &labels, &query, 1).unwrap(), 3);
    }

    #[test]
    fn knn_agrees_with_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let train = random_matrix(&mut rng, 6, 50);
        let labels: Vec<usize> = (0..50).map(|_| rng.random_range(0..4)).collect();
        for _ in 0..100 {
            let query = Vector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            for k in [1usize, 3] {
                // oracle: scan all points, pick k smallest, majority with the
                // documented tie-breaks
                let mut d: Vec<(f64, usize)> = (0..50)
                    .map(|j| ((train.column(j) - &query).norm_squared(), j))
                    .collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut counts = std::collections::BTreeMap::new();
                for &(_, j) in &d[..k] {
                    *counts.entry(labels[j]).or_insert(0usize) += 1;
                }
                let top = *counts.values().max().unwrap();
                let expected = d[..k]
                    .iter()
                    .map(|&(_, j)| labels[j])
                    .find(|c| counts[c] == top)
                    .unwrap();
                assert_eq!(knn_classify(&train, &labels, &query, k).unwrap(), expected);
            }
        }
    }

    #[test]
    fn knn_is_permutation_invariant_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = random_matrix(&mut rng, 5, 30);
        let labels: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
        let query = Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let baseline = knn_classify(&train, &labels, &query, 1).unwrap();
        // reversed column order
        let perm: Vec<usize> = (0..30).rev().collect();
        let shuffled = Matrix::from_fn(5, 30, |i, j| train[(i, perm[j])]);
        let shuffled_labels: Vec<usize> = perm.iter().map(|&j| labels[j]).collect();
        assert_eq!(
            knn_classify(&shuffled, &shuffled_labels, &query, 1).unwrap(),
            baseline
        );
    }

    #[test]
    fn knn_rejects_bad_inputs() {
        let train = Matrix::zeros(3, 2);
        let q = Vector::zeros(3);
        assert!(knn_classify(&Matrix::zeros(3, 0), &[], &q, 1).is_err());
        assert!(knn_classify(&train, &[0], &q, 1).is_err());
        assert!(knn_classify(&train, &[0, 1], &q, 3).is_err());
        assert!(knn_classify(&train, &[0, 1], &Vector::zeros(2), 1).is_err());
    }

    #[test]
    fn src_self_coding_concentrates_on_the_matching_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dict = unit_columns(&random_matrix(&mut rng, 10, 8));
        let y = Vector::from_column_slice(dict.column(5).as_slice());
        let fit = src_fit(&dict, &y, 1e-4, 2000).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[5] > 0.99, "alpha_5 = {}", fit.coefficients[5]);
        for j in 0..8 {
            if j != 5 {
                assert!(fit.coefficients[j].abs() < 1e-3);
            }
        }
    }

    #[test]
    fn src_zero_signal_codes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dict = random_matrix(&mut rng, 6, 10);
        let fit = src_fit(&dict, &Vector::zeros(6), 0.01, 100).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients.iter().all(|&v| v == 0.0));
    }

    /// Cyclic coordinate descent on the same penalized problem, run to a
    /// much tighter tolerance.
    fn coordinate_descent_oracle(dict: &Matrix, y: &Vector, gamma: f64) -> DVector<f64> {
        let n = dict.ncols();
        let mut alpha = DVector::zeros(n);
        let mut residual = y.clone();
        for _ in 0..20000 {
            let mut delta: f64 = 0.0;
            for j in 0..n {
                let col = dict.column(j);
                let old = alpha[j];
                let rho: f64 = col.dot(&residual) + old * col.norm_squared();
                let new = rho.signum() * (rho.abs() - gamma).max(0.0) / col.norm_squared();
                if new != old {
                    residual -= col * (new - old);
                    alpha[j] = new;
                    delta = delta.max((new - old).abs());
                }
            }
            if delta < 1e-13 {
                break;
            }
        }
        alpha
    }

    #[test]
    fn src_matches_coordinate_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dict = unit_columns(&random_matrix(&mut rng, 10, 25));
        let y = Vector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let gamma = 0.05;
        let objective = |a: &DVector<f64>| {
            0.5 * (&y - &dict * a).norm_squared() + gamma * a.iter().map(|v| v.abs()).sum::<f64>()
        };
        let fit = src_fit(&dict, &y, gamma, 5000).unwrap();
        assert!(fit.converged);
        let oracle = coordinate_descent_oracle(&dict, &y, gamma);
        assert_abs_diff_eq!(
            objective(&fit.coefficients),
            objective(&oracle),
            epsilon = 1e-6
        );
    }

    #[test]
    fn src_iterates_improve_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dict = unit_columns(&random_matrix(&mut rng, 8, 20));
        let y = Vector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let gamma = 0.02;
        let objective = |a: &DVector<f64>| {
            0.5 * (&y - &dict * a).norm_squared() + gamma * a.iter().map(|v| v.abs()).sum::<f64>()
        };
        let mut last = f64::INFINITY;
        for budget in 1..40 {
            let fit = src_fit(&dict, &y, gamma, budget).unwrap();
            let obj = objective(&fit.coefficients);
            assert!(obj <= last + 1e-12, "objective went up at budget {budget}");
            last = obj;
        }
    }

    #[test]
    fn src_optimality_residual_holds_at_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dict = unit_columns(&random_matrix(&mut rng, 12, 18));
        let y = Vector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let gamma = 0.03;
        let fit = src_fit(&dict, &y, gamma, 10000).unwrap();
        assert!(fit.converged);
        let grad = dict.transpose() * (&dict * &fit.coefficients - &y);
        assert!(subgradient_residual(&grad, &fit.coefficients, gamma) <= 1e-6);
    }

    #[test]
    fn src_identity_exact_class_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dict = unit_columns(&random_matrix(&mut rng, 6, 9));
        let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        // alpha supported on class 2 with exact reconstruction
        let mut alpha = DVector::zeros(9);
        alpha[6] = 0.5;
        alpha[8] = -0.25;
        let y = dict.column(6) * 0.5 - dict.column(8) * 0.25;
        let sol = src_identity(&dict, &labels, &Vector::from_column_slice(y.as_slice()), &alpha);
        assert_eq!(sol.predicted, 2);
        assert!(sol.residuals_per_class[2] < 1e-12);

        // zero code: every residual is ||y||, tie resolves to class 0
        let zero = DVector::zeros(9);
        let sol = src_identity(&dict, &labels, &Vector::from_column_slice(y.as_slice()), &zero);
        assert_eq!(sol.predicted, 0);
        for r in &sol.residuals_per_class {
            assert_abs_diff_eq!(*r, y.norm(), epsilon = 1e-12);
        }
    }

    #[test]
    fn src_identity_residuals_match_per_class_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dict = random_matrix(&mut rng, 7, 12);
        let labels: Vec<usize> = (0..12).map(|j| j % 3).collect();
        let alpha = DVector::from_fn(12, |_, _| rng.random_range(-0.5..0.5));
        let y = Vector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
        let sol = src_identity(&dict, &labels, &y, &alpha);
        for c in 0..3 {
            let mut recon = Vector::zeros(7);
            for j in 0..12 {
                if labels[j] == c {
                    recon += dict.column(j) * alpha[j];
                }
            }
            assert_abs_diff_eq!(
                sol.residuals_per_class[c],
                (&y - recon).norm(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn pca_finds_the_dominant_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        // variance only along e1
        let train = Matrix::from_fn(4, 12, |i, _| {
            if i == 0 {
                rng.random_range(-3.0..3.0)
            } else {
                0.0
            }
        });
        let model = pca_fit(&train, 1).unwrap();
        assert_abs_diff_eq!(model.components.column(0)[0].abs(), 1.0, epsilon = 1e-10);

        // projecting the mean gives the zero vector
        let projected = pca_project(&model, &model.mean);
        assert!(projected.norm() < 1e-12);
    }

    #[test]
    fn pca_components_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let train = random_matrix(&mut rng, 9, 14);
        let model = pca_fit(&train, 5).unwrap();
        let gram = model.components.transpose() * &model.components;
        assert!((gram - Matrix::identity(5, 5)).norm() < 1e-8);
    }

    #[test]
    fn pca_reconstruction_error_matches_discarded_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let train = random_matrix(&mut rng, 8, 10);
        let d = 3;
        let model = pca_fit(&train, d).unwrap();
        let recon = pca_reconstruct(&model, &pca_project_matrix(&model, &train));
        let err = (&train - recon).norm_squared() / train.ncols() as f64;

        let mut centered = train.clone();
        let mean = &model.mean;
        for mut col in centered.column_iter_mut() {
            col -= mean;
        }
        let s = singular_values(&centered).unwrap();
        let discarded: f64 = s.iter().skip(d).map(|v| v * v).sum::<f64>() / train.ncols() as f64;
        assert_abs_diff_eq!(err, discarded, epsilon = 1e-10);
    }

    #[test]
    fn pca_rejects_oversized_dimension() {
        let train = Matrix::zeros(4, 6).add_scalar(1.0);
        assert!(pca_fit(&train, 5).is_err());
        assert!(pca_fit(&train, 0).is_err());
    }
}
