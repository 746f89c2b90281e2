use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `exp(-gamma * |x - y|^2)`
    Rbf,
    /// `<x, y>`
    Linear,
}

impl std::str::FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" => Ok(KernelKind::Rbf),
            "linear" => Ok(KernelKind::Linear),
            other => Err(format!("unknown kernel {other:?} (expected rbf or linear)")),
        }
    }
}

/// A kernel with its resolved parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(a, b),
            KernelKind::Rbf => (-self.gamma * sq_dist(a, b)).exp(),
        }
    }

    /// Dense symmetric Gram matrix, row-major.
    pub fn gram(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        k.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.eval(&x[i], &x[j]);
            }
        });
        k
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rows beyond this are subsampled (evenly strided) for the median heuristic.
const MEDIAN_SAMPLE: usize = 1000;

/// `1 / (2 * median^2)` over pairwise distances; 1.0 when every row coincides.
pub fn median_heuristic_gamma(x: &[Vec<f64>]) -> f64 {
    let rows: Vec<&Vec<f64>> = if x.len() > MEDIAN_SAMPLE {
        let stride = x.len() as f64 / MEDIAN_SAMPLE as f64;
        (0..MEDIAN_SAMPLE)
            .map(|i| &x[(i as f64 * stride) as usize])
            .collect()
    } else {
        x.iter().collect()
    };
    let mut d: Vec<f64> = (0..rows.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i + 1..rows.len()).map(move |j| sq_dist(rows[i], rows[j]))
        })
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let median_sq = *m;
    if median_sq <= 0.0 {
        1.0
    } else {
        1.0 / (2.0 * median_sq)
    }
}
