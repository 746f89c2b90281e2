//! Seeded k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train, RegressorConfig, TargetPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    /// Mean squared error over every (row, target) cell of each held-out fold.
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
    /// Sample standard deviation of `fold_mse`.
    pub std_mse: f64,
}

impl CvReport {
    pub fn from_folds(seed: u64, fold_mse: Vec<f64>) -> CvReport {
        let k = fold_mse.len() as f64;
        let mean = fold_mse.iter().sum::<f64>() / k;
        let std = if fold_mse.len() > 1 {
            (fold_mse.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        CvReport {
            folds: fold_mse.len(),
            seed,
            fold_mse,
            mean_mse: mean,
            std_mse: std,
        }
    }
}

/// Fold index per row. Rows are shuffled, then cut into `k` contiguous
/// chunks; the first `n % k` folds get one extra row.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Validation(format!("{k} folds requested for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut fold_of = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            fold_of[row] = fold;
        }
        pos += size;
    }
    Ok(fold_of)
}

pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[TargetPair],
    k: usize,
    config: &RegressorConfig,
    seed: u64,
) -> Result<CvReport> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!(
            "{} feature rows but {} target rows",
            x.len(),
            y.len()
        )));
    }
    let fold_of = fold_assignment(x.len(), k, seed)?;
    let mut fold_mse = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, &f) in fold_of.iter().enumerate() {
            if f == fold {
                vx.push(x[i].clone());
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        let model = train(&tx, &ty, config, "cv", seed)?;
        let pred = model.predict(&vx)?;
        let sse: f64 = pred
            .iter()
            .zip(&vy)
            .map(|(p, t)| {
                (p.convincingness - t.convincingness).powi(2) + (p.severity - t.severity).powi(2)
            })
            .sum();
        fold_mse.push(sse / (2 * vy.len()) as f64);
        log::debug!("fold {fold}: mse {:.4}", fold_mse[fold]);
    }
    Ok(CvReport::from_folds(seed, fold_mse))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_for_1884_rows() {
        let f = fold_assignment(1884, 10, 3).unwrap();
        let mut sizes = [0usize; 10];
        for i in f {
            sizes[i] += 1;
        }
        assert_eq!(sizes.iter().filter(|&&s| s == 189).count(), 4);
        assert_eq!(sizes.iter().filter(|&&s| s == 188).count(), 6);
    }

    #[test]
    fn fold_errors() {
        assert!(fold_assignment(5, 6, 0).is_err());
        assert!(fold_assignment(5, 1, 0).is_err());
    }

    #[test]
    fn report_statistics() {
        let r = CvReport::from_folds(1, vec![1.0, 2.0, 3.0]);
        assert_eq!(r.mean_mse, 2.0);
        assert_eq!(r.std_mse, 1.0);
    }

    #[test]
    fn perfect_fit_and_determinism() {
        let (x, _) = crate::regressor::tests::synthetic(60, 3, 2);
        let y = vec![
            TargetPair {
                convincingness: 3.0,
                severity: 1.5
            };
            60
        ];
        let cfg = RegressorConfig::default();
        let a = cross_validate(&x, &y, 5, &cfg, 7).unwrap();
        assert!(a.mean_mse < 1e-12);
        let (x, y) = crate::regressor::tests::synthetic(60, 3, 4);
        let b = cross_validate(&x, &y, 5, &cfg, 7).unwrap();
        let c = cross_validate(&x, &y, 5, &cfg, 7).unwrap();
        assert_eq!(b, c);
    }
}
