//! End-to-end experiment driver: corrupt a dataset, split it into stratified
//! folds, run a recovery pipeline per fold (raw / PCA / learned transform),
//! classify the test columns, and collect accuracy and PSNR.
//!
//! Everything is deterministic for a fixed config and seed; rerunning a
//! config reproduces every output byte.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classify::{
    knn_classify, pca_fit, pca_project_matrix, pca_reconstruct, src_default_gamma, src_fit,
    src_identity,
};
use crate::corruption::{apply_corruption, CorruptionSpec, FillRule, NoiseKind};
use crate::error::{CrtError, Result};
use crate::io::{load_dataset, DatasetManifest, LabeledDataset};
use crate::rpca::{rpca_decompose, rpca_default_lambda};
use crate::solver::{fit_robust, recover, LossMode, SolverConfig};
use crate::{Matrix, Vector};

/// Which representation the test images are classified in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    /// Classify the (possibly corrupted) images as-is.
    Raw,
    /// Project onto the top principal components of the training fold.
    Pca { dim: usize },
    /// RPCA-clean the training fold, learn a recovery transform on the
    /// (clean, noisy) pair, and classify recovered test images.
    Crt { lambda: f64, loss_mode: LossMode },
}

impl Pipeline {
    fn name(&self) -> &'static str {
        match self {
            Pipeline::Raw => "raw",
            Pipeline::Pca { .. } => "pca",
            Pipeline::Crt { .. } => "crt",
        }
    }

    fn param(&self) -> String {
        match self {
            Pipeline::Raw => String::new(),
            Pipeline::Pca { dim } => dim.to_string(),
            Pipeline::Crt { lambda, .. } => format!("{lambda}"),
        }
    }
}

/// Classifier applied to the chosen representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classifier {
    Knn { k: usize },
    /// Sparse representation classification; `gamma <= 0` picks the
    /// per-query default weight.
    Src { gamma: f64 },
}

impl Classifier {
    fn name(&self) -> String {
        match self {
            Classifier::Knn { k } => format!("knn({k})"),
            Classifier::Src { gamma } if *gamma > 0.0 => format!("src({gamma})"),
            Classifier::Src { .. } => "src(auto)".to_string(),
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Dataset source; in-memory runs leave this unset.
    pub manifest: Option<PathBuf>,
    /// Synthetic corruption applied to every image before splitting;
    /// `None` evaluates the data as-is.
    pub corruption: Option<CorruptionSpec>,
    pub pipeline: Pipeline,
    pub classifier: Classifier,
    pub folds: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Solver settings for the transform fit.
    pub solver: SolverConfig,
    /// RPCA weight for ground-truth synthesis; `<= 0` picks the default.
    pub rpca_lambda: f64,
    /// Compare test images against the recovered training images `A * Z`
    /// instead of the RPCA-cleaned training set.
    pub compare_recovered_train: bool,
}

impl ExperimentConfig {
    /// A 5-fold raw/KNN evaluation with default solver settings.
    pub fn new(pipeline: Pipeline, classifier: Classifier, seed: u64) -> Self {
        ExperimentConfig {
            manifest: None,
            corruption: None,
            pipeline,
            classifier,
            folds: 5,
            seed,
            output_dir: None,
            solver: SolverConfig::default(),
            rpca_lambda: 0.0,
            compare_recovered_train: false,
        }
    }

    /// Parse a `key=value` experiment file. See the README for the key list.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CrtError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut manifest = None;
        let mut kind: Option<NoiseKind> = None;
        let mut fraction = 0.10;
        let mut fill: Option<FillRule> = None;
        let mut corruption_seed: Option<u64> = None;
        let mut pipeline_name = None;
        let mut lambda = 0.12;
        let mut loss: LossMode = LossMode::L21;
        let mut dim = 50usize;
        let mut classifier_name = None;
        let mut k = 1usize;
        let mut gamma = 0.0f64;
        let mut folds = 5usize;
        let mut seed = 0u64;
        let mut output_dir = None;
        let mut solver = SolverConfig::default();
        let mut rpca_lambda = 0.0f64;
        let mut compare_recovered_train = false;

        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CrtError::parse(path, format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| CrtError::parse(path, format!("bad {what}: {value:?}"));
            match key {
                "manifest" => {
                    let p = PathBuf::from(value);
                    manifest = Some(if p.is_absolute() { p } else { base.join(p) });
                }
                "kind" => {
                    kind = match value {
                        "none" => None,
                        other => Some(other.parse()?),
                    }
                }
                "fraction" => fraction = value.parse().map_err(|_| bad("fraction"))?,
                "fill" => fill = Some(value.parse()?),
                "corruption_seed" => {
                    corruption_seed = Some(value.parse().map_err(|_| bad("corruption_seed"))?)
                }
                "pipeline" => pipeline_name = Some(value.to_string()),
                "lambda" => lambda = value.parse().map_err(|_| bad("lambda"))?,
                "loss" => loss = value.parse()?,
                "dim" => dim = value.parse().map_err(|_| bad("dim"))?,
                "classifier" => classifier_name = Some(value.to_string()),
                "k" => k = value.parse().map_err(|_| bad("k"))?,
                "gamma" => gamma = value.parse().map_err(|_| bad("gamma"))?,
                "folds" => folds = value.parse().map_err(|_| bad("folds"))?,
                "seed" => seed = value.parse().map_err(|_| bad("seed"))?,
                "out" => output_dir = Some(base.join(value)),
                "mu0" => solver.mu0 = value.parse().map_err(|_| bad("mu0"))?,
                "rho" => solver.rho = value.parse().map_err(|_| bad("rho"))?,
                "mu_max" => solver.mu_max = value.parse().map_err(|_| bad("mu_max"))?,
                "tol" => solver.tol = value.parse().map_err(|_| bad("tol"))?,
                "max_iter" => solver.max_iter = value.parse().map_err(|_| bad("max_iter"))?,
                "rpca_lambda" => rpca_lambda = value.parse().map_err(|_| bad("rpca_lambda"))?,
                "compare" => {
                    compare_recovered_train = match value {
                        "clean" => false,
                        "recovered_train" => true,
                        _ => return Err(bad("compare (clean | recovered_train)")),
                    }
                }
                other => return Err(CrtError::parse(path, format!("unknown key {other:?}"))),
            }
        }

        let pipeline = match pipeline_name.as_deref() {
            Some("raw") | None => Pipeline::Raw,
            Some("pca") => Pipeline::Pca { dim },
            Some("crt") => Pipeline::Crt {
                lambda,
                loss_mode: loss,
            },
            Some(other) => {
                return Err(CrtError::parse(path, format!("unknown pipeline {other:?}")))
            }
        };
        let classifier = match classifier_name.as_deref() {
            Some("knn") | None => Classifier::Knn { k },
            Some("src") => Classifier::Src { gamma },
            Some(other) => {
                return Err(CrtError::parse(
                    path,
                    format!("unknown classifier {other:?}"),
                ))
            }
        };
        let corruption = kind.map(|kind| {
            let mut spec = CorruptionSpec::new(kind, fraction, corruption_seed.unwrap_or(seed));
            if let Some(fill) = fill {
                spec.fill = fill;
            }
            spec
        });
        Ok(ExperimentConfig {
            manifest,
            corruption,
            pipeline,
            classifier,
            folds,
            seed,
            output_dir,
            solver,
            rpca_lambda,
            compare_recovered_train,
        })
    }
}

/// Per-fold outcome.
#[derive(Debug, Clone, Copy)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    /// Mean PSNR of the fold's recovered test images against the
    /// pre-corruption reference.
    pub psnr: f64,
}

/// Cross-validation results for one (pipeline, classifier) pair.
#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub pipeline: String,
    pub classifier: String,
    pub param: String,
    pub folds: Vec<FoldMetrics>,
}

impl MetricsTable {
    pub fn mean_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.accuracy).sum::<f64>() / self.folds.len() as f64
    }

    pub fn mean_psnr(&self) -> f64 {
        self.folds.iter().map(|f| f.psnr).sum::<f64>() / self.folds.len() as f64
    }

    /// CSV with header `pipeline,classifier,param,fold,accuracy,psnr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pipeline,classifier,param,fold,accuracy,psnr\n");
        for f in &self.folds {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.3}\n",
                self.pipeline, self.classifier, self.param, f.fold, f.accuracy, f.psnr
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| CrtError::io(path, e))
    }
}

/// Peak signal-to-noise ratio in dB for `[0, 1]`-scaled signals, capped at
/// 100 dB (the reported value for identical inputs).
pub fn psnr(x: &[f64], reference: &[f64]) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(CrtError::DimensionMismatch(format!(
            "psnr inputs of length {} and {}",
            x.len(),
            reference.len()
        )));
    }
    if x.is_empty() {
        return Err(CrtError::InvalidArgument("empty psnr inputs".to_string()));
    }
    let mse: f64 =
        x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(100.0))
}

/// Deterministic stratified split: per-class shuffles dealt round-robin so
/// fold sizes differ by at most one sample overall.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(CrtError::InvalidArgument("folds must be >= 2".to_string()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some(small) = by_class.iter().position(|c| c.len() < folds) {
        return Err(CrtError::InvalidArgument(format!(
            "class {small} has {} samples, fewer than {folds} folds",
            by_class[small].len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut next_fold = 0usize;
    for class in &mut by_class {
        class.shuffle(&mut rng);
        for &idx in class.iter() {
            out[next_fold].push(idx);
            next_fold = (next_fold + 1) % folds;
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

fn gather_columns(data: &Matrix, indices: &[usize]) -> Matrix {
    Matrix::from_fn(data.nrows(), indices.len(), |i, j| data[(i, indices[j])])
}

fn classify_all(
    train_repr: &Matrix,
    train_labels: &[usize],
    queries: &Matrix,
    classifier: &Classifier,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(queries.ncols());
    for q in queries.column_iter() {
        let query = Vector::from_column_slice(q.as_slice());
        let predicted = match classifier {
            Classifier::Knn { k } => knn_classify(train_repr, train_labels, &query, *k)?,
            Classifier::Src { gamma } => {
                let g = if *gamma > 0.0 {
                    *gamma
                } else {
                    src_default_gamma(train_repr, &query).max(1e-12)
                };
                let fit = src_fit(train_repr, &query, g, 2000)?;
                src_identity(train_repr, train_labels, &query, &fit.coefficients).predicted
            }
        };
        out.push(predicted);
    }
    Ok(out)
}

fn mean_psnr(recovered: &Matrix, reference: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for (r, c) in recovered.column_iter().zip(reference.column_iter()) {
        total += psnr(r.as_slice(), c.as_slice())?;
    }
    Ok(total / recovered.ncols() as f64)
}

/// Run stratified cross-validation on an in-memory dataset.
pub fn run_cv_on(dataset: &LabeledDataset, config: &ExperimentConfig) -> Result<MetricsTable> {
    config.solver.validate()?;
    // Corruption covers the whole dataset before splitting; the original
    // pixels stay around as the PSNR reference.
    let (working, reference) = match &config.corruption {
        Some(spec) => {
            let (corrupted, _) = apply_corruption(dataset, spec)?;
            (corrupted, dataset.data.clone())
        }
        None => (dataset.clone(), dataset.data.clone()),
    };

    let fold_indices = stratified_folds(&working.labels, config.folds, config.seed)?;
    let mut folds = Vec::with_capacity(config.folds);
    for (fold_id, test_idx) in fold_indices.iter().enumerate() {
        let train_idx: Vec<usize> = (0..working.num_samples())
            .filter(|i| !test_idx.contains(i))
            .collect();
        let train = gather_columns(&working.data, &train_idx);
        let train_labels: Vec<usize> = train_idx.iter().map(|&i| working.labels[i]).collect();
        let test = gather_columns(&working.data, test_idx);
        let test_labels: Vec<usize> = test_idx.iter().map(|&i| working.labels[i]).collect();
        let test_reference = gather_columns(&reference, test_idx);

        let (train_repr, test_repr, recovered) = match &config.pipeline {
            Pipeline::Raw => (train.clone(), test.clone(), test.clone()),
            Pipeline::Pca { dim } => {
                let model = pca_fit(&train, *dim)?;
                let train_proj = pca_project_matrix(&model, &train);
                let test_proj = pca_project_matrix(&model, &test);
                let recovered = pca_reconstruct(&model, &test_proj);
                (train_proj, test_proj, recovered)
            }
            Pipeline::Crt { lambda, loss_mode } => {
                let rl = if config.rpca_lambda > 0.0 {
                    config.rpca_lambda
                } else {
                    rpca_default_lambda(train.nrows(), train.ncols())
                };
                let clean = rpca_decompose(&train, rl, &config.solver)?.low_rank;
                let (model, _) = fit_robust(&clean, &train, *lambda, *loss_mode, &config.solver)?;
                let recovered = recover(&model, &test)?;
                let train_repr = if config.compare_recovered_train {
                    recover(&model, &train)?
                } else {
                    clean
                };
                (train_repr, recovered.clone(), recovered)
            }
        };

        let predictions = classify_all(&train_repr, &train_labels, &test_repr, &config.classifier)?;
        let correct = predictions
            .iter()
            .zip(&test_labels)
            .filter(|(p, t)| p == t)
            .count();
        folds.push(FoldMetrics {
            fold: fold_id,
            accuracy: correct as f64 / test_labels.len() as f64,
            psnr: mean_psnr(&recovered, &test_reference)?,
        });
    }

    Ok(MetricsTable {
        pipeline: config.pipeline.name().to_string(),
        classifier: config.classifier.name(),
        param: config.pipeline.param(),
        folds,
    })
}

/// Load the configured dataset and run cross-validation.
pub fn run_cv(config: &ExperimentConfig) -> Result<MetricsTable> {
    let manifest_path = config.manifest.as_ref().ok_or_else(|| {
        CrtError::InvalidArgument("experiment config has no dataset manifest".to_string())
    })?;
    let manifest = DatasetManifest::from_file(manifest_path)?;
    let dataset = load_dataset(&manifest)?;
    run_cv_on(&dataset, config)
}
