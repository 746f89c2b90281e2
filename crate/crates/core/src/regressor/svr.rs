//! Epsilon-insensitive support vector regression solved with SMO.
//!
//! The dual is posed over `2n` variables `[alpha; alpha*]` with labels
//! `+1`/`-1`, linear term `epsilon -/+ y`, box `[0, C]` and the equality
//! constraint `sum y_t alpha_t = 0`. Working pairs are chosen by maximal
//! violation for the first index and second-order gain for the second.

const TAU: f64 = 1e-12;

pub(crate) struct SvrSolution {
    /// `alpha_i - alpha*_i` per training row.
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct SvrProblem<'a> {
    /// Row-major `n x n` Gram matrix.
    pub gram: &'a [f64],
    pub targets: &'a [f64],
    pub c: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl SvrProblem<'_> {
    pub fn solve(&self) -> SvrSolution {
        let n = self.targets.len();
        let l = 2 * n;
        let c = self.c;
        let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
        let kern = |a: usize, b: usize| self.gram[(a % n) * n + (b % n)];
        let q_diag: Vec<f64> = (0..l).map(|t| kern(t, t)).collect();

        let mut alpha = vec![0.0; l];
        let mut grad: Vec<f64> = (0..l)
            .map(|t| {
                if t < n {
                    self.epsilon - self.targets[t]
                } else {
                    self.epsilon + self.targets[t - n]
                }
            })
            .collect();

        let at_upper = |a: f64| a >= c;
        let at_lower = |a: f64| a <= 0.0;

        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            // First index: maximal violating variable in the "up" set.
            let mut g_max = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..l {
                let v = if sign(t) > 0.0 {
                    (!at_upper(alpha[t])).then(|| -grad[t])
                } else {
                    (!at_lower(alpha[t])).then(|| grad[t])
                };
                if let Some(v) = v {
                    if v >= g_max {
                        g_max = v;
                        i = t;
                    }
                }
            }
            if i == usize::MAX {
                converged = true;
                break;
            }
            let yi = sign(i);

            // Second index: best second-order decrease among "low" variables.
            let mut g_max2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut best = f64::INFINITY;
            for t in 0..l {
                let yt = sign(t);
                let qit = yi * yt * kern(i, t);
                if yt > 0.0 {
                    if !at_lower(alpha[t]) {
                        let diff = g_max + grad[t];
                        g_max2 = g_max2.max(grad[t]);
                        if diff > 0.0 {
                            let mut quad = q_diag[i] + q_diag[t] - 2.0 * yi * qit;
                            if quad <= 0.0 {
                                quad = TAU;
                            }
                            let obj = -(diff * diff) / quad;
                            if obj <= best {
                                best = obj;
                                j = t;
                            }
                        }
                    }
                } else if !at_upper(alpha[t]) {
                    let diff = g_max - grad[t];
                    g_max2 = g_max2.max(-grad[t]);
                    if diff > 0.0 {
                        let mut quad = q_diag[i] + q_diag[t] + 2.0 * yi * qit;
                        if quad <= 0.0 {
                            quad = TAU;
                        }
                        let obj = -(diff * diff) / quad;
                        if obj <= best {
                            best = obj;
                            j = t;
                        }
                    }
                }
            }
            if g_max + g_max2 < self.tolerance || j == usize::MAX {
                converged = true;
                break;
            }
            iterations += 1;

            let yj = sign(j);
            let qij = yi * yj * kern(i, j);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            if yi != yj {
                let mut quad = q_diag[i] + q_diag[j] + 2.0 * qij;
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                // Both boxes are [0, C], so the upper-side branch reduces to diff > 0.
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let mut quad = q_diag[i] + q_diag[j] - 2.0 * qij;
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }

            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            if di != 0.0 || dj != 0.0 {
                for (t, g) in grad.iter_mut().enumerate() {
                    let yt = sign(t);
                    *g += yt * (yi * kern(i, t) * di + yj * kern(j, t) * dj);
                }
            }
        }

        // Offset from free variables, or the midpoint of the feasible interval.
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..l {
            let yg = sign(t) * grad[t];
            if at_upper(alpha[t]) {
                if sign(t) < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if at_lower(alpha[t]) {
                if sign(t) > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            (ub + lb) / 2.0
        };

        SvrSolution {
            coef: (0..n).map(|t| alpha[t] - alpha[t + n]).collect(),
            intercept: -rho,
            iterations,
            converged,
        }
    }
}
