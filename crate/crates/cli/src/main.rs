//! `crt`: learn and apply corruption recovery transforms from the shell.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use crt_core::corruption::{apply_corruption, masks_to_matrix, CorruptionSpec, FillRule, NoiseKind};
use crt_core::harness::{run_cv, ExperimentConfig};
use crt_core::io::{self, DatasetManifest, MatrixFormat};
use crt_core::rpca::{rpca_decompose, rpca_default_lambda};
use crt_core::solver::{self, fit_robust, LossMode, SolverConfig};
use crt_core::{CrtError, Matrix};

#[derive(Parser)]
#[command(name = "crt", version, about = "corruption recovery transform toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt every image of a dataset with seeded synthetic noise.
    Corrupt {
        /// Dataset manifest (key=value file).
        #[arg(long)]
        manifest: PathBuf,
        /// Noise geometry: block, cross, or saltpepper.
        #[arg(long)]
        kind: String,
        /// Fraction of each image's area to corrupt.
        #[arg(long, default_value_t = 0.10)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fill rule: zeros, max, or random_binary (defaults per kind).
        #[arg(long)]
        fill: Option<String>,
        /// Output directory for corrupted.crtm, masks.crtm, labels.txt,
        /// and corrupted.manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset into low-rank plus sparse parts.
    Rpca {
        #[arg(long)]
        manifest: PathBuf,
        /// Weight on the sparse term; defaults to 1/sqrt(max(p, n)).
        #[arg(long)]
        lambda: Option<f64>,
        /// Decompose each class separately instead of the whole matrix.
        #[arg(long, default_value_t = false)]
        per_class: bool,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        /// Output directory for low_rank.crtm and sparse.crtm.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a recovery transform from a (clean, noisy) training pair.
    Train {
        /// Clean training matrix (CRTM or CSV).
        #[arg(long)]
        clean: PathBuf,
        /// Noisy training matrix of the same shape.
        #[arg(long)]
        noisy: PathBuf,
        /// Regularization weight (the diagonal jitter for ridge mode).
        #[arg(long, default_value_t = 0.12)]
        lambda: f64,
        /// Loss on the residual: l21, frobenius, or ridge (closed form).
        #[arg(long, default_value = "l21")]
        loss: String,
        #[arg(long, default_value_t = 1e-6)]
        mu0: f64,
        #[arg(long, default_value_t = 1.2)]
        rho: f64,
        #[arg(long, default_value_t = 1e10)]
        mu_max: f64,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iter: usize,
        /// Model output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a trained transform to a matrix of corrupted columns.
    Recover {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify query columns against a training set, printing one class
    /// id per line.
    #[command(group(ArgGroup::new("rule").required(true).args(["knn", "src"])))]
    Classify {
        /// Transform applied to the queries before classification.
        #[arg(long)]
        model: PathBuf,
        /// Training matrix the queries are compared against.
        #[arg(long)]
        train: PathBuf,
        /// Training labels, one integer per line.
        #[arg(long)]
        labels: PathBuf,
        /// Query matrix.
        #[arg(long)]
        query: PathBuf,
        /// K nearest neighbors (1 or 3 are the usual choices).
        #[arg(long)]
        knn: Option<usize>,
        /// Sparse representation classification with this penalty weight
        /// (0 picks the per-query default).
        #[arg(long)]
        src: Option<f64>,
    },
    /// Run a cross-validation experiment described by a config file.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Export the leading transform columns as PGM images.
    Basis {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    // die quietly when a pipe reader (head, less) goes away
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; they are not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e
                .downcast_ref::<CrtError>()
                .map(CrtError::is_numerical)
                .unwrap_or(false);
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

fn load(path: &Path) -> anyhow::Result<Matrix> {
    Ok(io::load_matrix(path, MatrixFormat::from_path(path))?)
}

fn save(m: &Matrix, path: &Path) -> anyhow::Result<()> {
    Ok(io::save_matrix(m, path, MatrixFormat::from_path(path))?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Corrupt {
            manifest,
            kind,
            fraction,
            seed,
            fill,
            out,
        } => {
            let dataset = io::load_dataset(&DatasetManifest::from_file(&manifest)?)?;
            let kind: NoiseKind = kind.parse::<NoiseKind>()?;
            let mut spec = CorruptionSpec::new(kind, fraction, seed);
            if let Some(fill) = fill {
                spec.fill = fill.parse::<FillRule>()?;
            }
            let (corrupted, masks) = apply_corruption(&dataset, &spec)?;
            std::fs::create_dir_all(&out)?;
            save(&corrupted.data, &out.join("corrupted.crtm"))?;
            save(&masks_to_matrix(&masks), &out.join("masks.crtm"))?;
            io::save_labels(&corrupted.labels, &out.join("labels.txt"))?;
            DatasetManifest {
                data_path: PathBuf::from("corrupted.crtm"),
                labels_path: PathBuf::from("labels.txt"),
                height: corrupted.height,
                width: corrupted.width,
                value_min: 0.0,
                value_max: 1.0,
            }
            .write(&out.join("corrupted.manifest"))?;
            println!(
                "corrupted {} images ({kind}, fraction {fraction}, seed {seed}) -> {}",
                corrupted.num_samples(),
                out.display()
            );
        }
        Command::Rpca {
            manifest,
            lambda,
            per_class,
            tol,
            max_iter,
            out,
        } => {
            let dataset = io::load_dataset(&DatasetManifest::from_file(&manifest)?)?;
            let config = SolverConfig {
                tol,
                max_iter,
                ..SolverConfig::default()
            };
            let (p, n) = dataset.data.shape();
            let mut low_rank = Matrix::zeros(p, n);
            let mut sparse = Matrix::zeros(p, n);
            let mut all_converged = true;
            if per_class {
                for class in 0..dataset.num_classes() {
                    let idx: Vec<usize> = (0..n)
                        .filter(|&j| dataset.labels[j] == class)
                        .collect();
                    let sub = Matrix::from_fn(p, idx.len(), |i, j| dataset.data[(i, idx[j])]);
                    let l = lambda.unwrap_or_else(|| rpca_default_lambda(p, idx.len()));
                    let result = rpca_decompose(&sub, l, &config)?;
                    all_converged &= result.report.converged;
                    for (j, &col) in idx.iter().enumerate() {
                        low_rank.set_column(col, &result.low_rank.column(j));
                        sparse.set_column(col, &result.sparse.column(j));
                    }
                }
            } else {
                let l = lambda.unwrap_or_else(|| rpca_default_lambda(p, n));
                let result = rpca_decompose(&dataset.data, l, &config)?;
                all_converged = result.report.converged;
                low_rank = result.low_rank;
                sparse = result.sparse;
            }
            std::fs::create_dir_all(&out)?;
            save(&low_rank, &out.join("low_rank.crtm"))?;
            save(&sparse, &out.join("sparse.crtm"))?;
            println!(
                "rpca split {p}x{n} (converged: {all_converged}) -> {}",
                out.display()
            );
        }
        Command::Train {
            clean,
            noisy,
            lambda,
            loss,
            mu0,
            rho,
            mu_max,
            tol,
            max_iter,
            out,
        } => {
            let clean_m = load(&clean)?;
            let noisy_m = load(&noisy)?;
            let loss_mode: LossMode = loss.parse::<LossMode>()?;
            if loss_mode == LossMode::Ridge {
                let model = solver::fit_ridge(&clean_m, &noisy_m, lambda)?;
                solver::save_model(&model, &out)?;
                println!(
                    "trained ridge transform (epsilon {lambda}) -> {}",
                    out.display()
                );
                return Ok(());
            }
            let config = SolverConfig {
                mu0,
                rho,
                mu_max,
                tol,
                max_iter,
            };
            let (model, report) = fit_robust(&clean_m, &noisy_m, lambda, loss_mode, &config)?;
            solver::save_model(&model, &out)?;
            let last = report.trace.last().expect("at least one iteration");
            println!(
                "trained {loss_mode} transform (lambda {lambda}) in {} iterations, \
                 converged: {}, residuals {:.2e}/{:.2e} -> {}",
                report.iterations,
                report.converged,
                last.transform_gap,
                last.fit_gap,
                out.display()
            );
        }
        Command::Recover { model, input, out } => {
            let model = solver::load_model(&model)?;
            let x = load(&input)?;
            let recovered = solver::recover(&model, &x)?;
            save(&recovered, &out)?;
            println!("recovered {} columns -> {}", x.ncols(), out.display());
        }
        Command::Classify {
            model,
            train,
            labels,
            query,
            knn,
            src,
        } => {
            let model = solver::load_model(&model)?;
            let train_m = load(&train)?;
            let labels = io::load_labels(&labels)?;
            let queries = solver::recover(&model, &load(&query)?)?;
            for q in queries.column_iter() {
                let query = crt_core::Vector::from_column_slice(q.as_slice());
                let predicted = if let Some(k) = knn {
                    crt_core::classify::knn_classify(&train_m, &labels, &query, k)?
                } else {
                    let gamma = src.expect("clap enforces knn|src");
                    let g = if gamma > 0.0 {
                        gamma
                    } else {
                        crt_core::classify::src_default_gamma(&train_m, &query).max(1e-12)
                    };
                    let fit = crt_core::classify::src_fit(&train_m, &query, g, 2000)?;
                    crt_core::classify::src_identity(&train_m, &labels, &query, &fit.coefficients)
                        .predicted
                };
                println!("{predicted}");
            }
        }
        Command::Eval { config } => {
            let experiment = ExperimentConfig::from_file(&config)?;
            let table = run_cv(&experiment)?;
            if let Some(dir) = &experiment.output_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join("metrics.csv");
                table.write_csv(&path)?;
                println!("metrics -> {}", path.display());
            } else {
                print!("{}", table.to_csv());
            }
            println!(
                "pipeline {} / {}: mean accuracy {:.4}, mean psnr {:.2} dB over {} folds",
                table.pipeline,
                table.classifier,
                table.mean_accuracy(),
                table.mean_psnr(),
                table.folds.len()
            );
        }
        Command::Basis {
            model,
            height,
            width,
            count,
            out,
        } => {
            let model = solver::load_model(&model)?;
            solver::export_basis(&model, height, width, &out, count)?;
            println!("wrote {count} basis images -> {}", out.display());
        }
    }
    Ok(())
}
