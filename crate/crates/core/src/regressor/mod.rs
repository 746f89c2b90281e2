//! Two-target kernel regression from embeddings to (convincingness, severity).
//!
//! Each target gets its own single-output regressor over a shared Gram
//! matrix. Predictions are clamped to `[1, 4]`.

mod cv;
mod kernel;
mod ridge;
mod svr;

pub use cv::{cross_validate, fold_assignment, CvReport};
pub use kernel::{median_heuristic_gamma, Kernel, KernelKind};

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::EmbeddingVector;
use crate::scoring::{SCORE_MAX, SCORE_MIN};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MIN_TRAINING_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Epsilon-insensitive SVR.
    Svr,
    /// Kernel ridge with `lambda = 1 / c`.
    KernelRidge,
}

impl std::str::FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "svr" => Ok(Solver::Svr),
            "kernel_ridge" | "ridge" | "krr" => Ok(Solver::KernelRidge),
            other => Err(format!("unknown solver {other:?} (expected svr or kernel-ridge)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorConfig {
    pub kernel: KernelKind,
    /// RBF width; `None` picks the median pairwise distance heuristic.
    pub gamma: Option<f64>,
    pub c: f64,
    pub epsilon: f64,
    pub solver: Solver,
    /// SMO stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            gamma: None,
            c: 1.0,
            epsilon: 0.1,
            solver: Solver::Svr,
            tolerance: 1e-3,
        }
    }
}

impl RegressorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Validation(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Validation(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Validation("tolerance must be positive".into()));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Validation(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// `f(x) = sum_i coef_i k(s_i, x) + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl TargetModel {
    fn eval(&self, kernel: &Kernel, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * kernel.eval(s, x))
            .sum::<f64>()
            + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub rows: usize,
    pub seed: u64,
    pub trained_at: DateTime<Utc>,
    /// Per target: the training targets were constant.
    pub zero_variance: [bool; 2],
    /// Per target: SMO stopped at the iteration cap.
    #[serde(default)]
    pub hit_iteration_cap: [bool; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub provider_id: String,
    pub dimension: usize,
    pub config: RegressorConfig,
    pub kernel: Kernel,
    /// Convincingness then severity.
    pub targets: [TargetModel; 2],
    pub manifest: TrainingManifest,
}

/// Training targets for one review.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPair {
    pub convincingness: f64,
    pub severity: f64,
}

fn check_matrix(x: &[Vec<f64>], dimension: usize) -> Result<()> {
    for row in x {
        if row.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature matrix contains non-finite values".into()));
        }
    }
    Ok(())
}

/// Fits both target regressors. Deterministic for fixed inputs and config.
pub fn train(
    x: &[Vec<f64>],
    y: &[TargetPair],
    config: &RegressorConfig,
    provider_id: &str,
    seed: u64,
) -> Result<RegressionModel> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(Error::Validation(format!(
            "{} feature rows but {} target rows",
            x.len(),
            y.len()
        )));
    }
    if x.len() < MIN_TRAINING_ROWS {
        return Err(Error::Validation(format!(
            "need at least {MIN_TRAINING_ROWS} training rows, got {}",
            x.len()
        )));
    }
    let dimension = x[0].len();
    if dimension == 0 {
        return Err(Error::Validation("zero-dimensional features".into()));
    }
    check_matrix(x, dimension)?;
    for t in y {
        for v in [t.convincingness, t.severity] {
            if !(SCORE_MIN..=SCORE_MAX).contains(&v) {
                return Err(Error::Validation(format!("target {v} outside [1, 4]")));
            }
        }
    }

    let gamma = match (config.kernel, config.gamma) {
        (KernelKind::Linear, _) => 0.0,
        (KernelKind::Rbf, Some(g)) => g,
        (KernelKind::Rbf, None) => median_heuristic_gamma(x),
    };
    let kernel = Kernel {
        kind: config.kernel,
        gamma,
    };
    let gram = kernel.gram(x);

    let columns: [Vec<f64>; 2] = [
        y.iter().map(|t| t.convincingness).collect(),
        y.iter().map(|t| t.severity).collect(),
    ];
    let mut zero_variance = [false; 2];
    let mut hit_cap = [false; 2];
    let mut fitted = Vec::with_capacity(2);
    for (ti, col) in columns.iter().enumerate() {
        zero_variance[ti] = col.iter().all(|v| *v == col[0]);
        if zero_variance[ti] {
            log::warn!("target {ti} is constant ({}); the fit is a constant function", col[0]);
        }
        let (coef, intercept) = match config.solver {
            Solver::Svr => {
                let l = 2 * x.len();
                let sol = svr::SvrProblem {
                    gram: &gram,
                    targets: col,
                    c: config.c,
                    epsilon: config.epsilon,
                    tolerance: config.tolerance,
                    max_iter: (100 * l).max(10_000_000),
                }
                .solve();
                hit_cap[ti] = !sol.converged;
                log::debug!("target {ti}: SMO finished in {} iterations", sol.iterations);
                (sol.coef, sol.intercept)
            }
            Solver::KernelRidge => ridge::solve(&gram, col, 1.0 / config.c)?,
        };
        // Keep only rows that contribute.
        let (support, coef): (Vec<Vec<f64>>, Vec<f64>) = x
            .iter()
            .zip(coef)
            .filter(|(_, c)| *c != 0.0)
            .map(|(row, c)| (row.clone(), c))
            .unzip();
        fitted.push(TargetModel {
            support,
            coef,
            intercept,
        });
    }
    let severity = fitted.pop().expect("two targets");
    let convincingness = fitted.pop().expect("two targets");

    Ok(RegressionModel {
        provider_id: provider_id.to_string(),
        dimension,
        config: *config,
        kernel,
        targets: [convincingness, severity],
        manifest: TrainingManifest {
            rows: x.len(),
            seed,
            trained_at: Utc::now(),
            zero_variance,
            hit_iteration_cap: hit_cap,
        },
    })
}

impl RegressionModel {
    /// Raw (unclamped) outputs for one row.
    pub fn decision(&self, x: &[f64]) -> (f64, f64) {
        (
            self.targets[0].eval(&self.kernel, x),
            self.targets[1].eval(&self.kernel, x),
        )
    }

    /// Clamped `(convincingness, severity)` per row.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<TargetPair>> {
        check_matrix(x, self.dimension)?;
        Ok(x.par_iter()
            .map(|row| {
                let (c, s) = self.decision(row);
                TargetPair {
                    convincingness: c.clamp(SCORE_MIN, SCORE_MAX),
                    severity: s.clamp(SCORE_MIN, SCORE_MAX),
                }
            })
            .collect())
    }

    /// Predicts from embeddings, refusing vectors from a different provider
    /// unless `allow_provider_mismatch` is set.
    pub fn predict_embeddings(
        &self,
        rows: &[EmbeddingVector],
        allow_provider_mismatch: bool,
    ) -> Result<Vec<TargetPair>> {
        if !allow_provider_mismatch {
            if let Some(bad) = rows.iter().find(|r| r.provider_id != self.provider_id) {
                return Err(Error::ProviderContract(format!(
                    "model was trained on {} embeddings, got {}",
                    self.provider_id, bad.provider_id
                )));
            }
        }
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
        self.predict(&x)
    }

    /// Writes a header line and a parameter line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = ModelHeader {
            format_version: MODEL_FORMAT_VERSION,
            provider_id: self.provider_id.clone(),
            dimension: self.dimension,
            config: self.config,
        };
        let params = ModelParams {
            kernel: self.kernel,
            targets: self.targets.clone(),
            manifest: self.manifest.clone(),
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        );
        serde_json::to_writer(&mut f, &header)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(&mut f, &params)?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<RegressionModel> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::ModelFormat("empty model file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let version: VersionProbe = serde_json::from_str(&header_line)
            .map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;
        if version.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::IncompatibleModel {
                found: version.format_version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let header: ModelHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;
        let params_line = lines
            .next()
            .ok_or_else(|| Error::ModelFormat("missing parameter section".into()))?
            .map_err(|e| Error::io(path, e))?;
        let params: ModelParams = serde_json::from_str(&params_line)
            .map_err(|e| Error::ModelFormat(format!("bad parameters: {e}")))?;
        for t in &params.targets {
            if t.support.len() != t.coef.len() {
                return Err(Error::ModelFormat("support/coef length mismatch".into()));
            }
            check_matrix(&t.support, header.dimension)
                .map_err(|e| Error::ModelFormat(e.to_string()))?;
        }
        Ok(RegressionModel {
            provider_id: header.provider_id,
            dimension: header.dimension,
            config: header.config,
            kernel: params.kernel,
            targets: params.targets,
            manifest: params.manifest,
        })
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    provider_id: String,
    dimension: usize,
    config: RegressorConfig,
}

#[derive(Serialize, Deserialize)]
struct ModelParams {
    kernel: Kernel,
    targets: [TargetModel; 2],
    manifest: TrainingManifest,
}
