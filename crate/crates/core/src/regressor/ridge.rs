//! Kernel ridge regression on centered targets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `(K + lambda I) a = y - mean(y)`; returns `(a, mean(y))`.
pub(crate) fn solve(gram: &[f64], targets: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = targets.len();
    let mean = targets.iter().sum::<f64>() / n as f64;
    let mut k = DMatrix::from_row_slice(n, n, gram);
    for i in 0..n {
        k[(i, i)] += lambda;
    }
    let rhs = DVector::from_iterator(n, targets.iter().map(|y| y - mean));
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Validation("kernel ridge system is not positive definite".into()))?;
    let a = chol.solve(&rhs);
    Ok((a.iter().copied().collect(), mean))
}
