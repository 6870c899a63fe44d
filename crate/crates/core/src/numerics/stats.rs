//! Log-space Monte Carlo aggregation with deterministic summation order.

use serde::Serialize;

/// Pairwise (cascade) summation; result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `log(sum(exp(x)))`, tolerating `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    let scaled: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    m + pairwise_sum(&scaled).ln()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Replica-average of `exp(w_i)` carried in log space.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogMeanEstimate {
    /// log of the sample mean of exp(w_i); `-inf` when every replica is zero.
    pub log_mean: f64,
    /// Standard error of the mean in natural units, relative to the mean
    /// (delta-method standard error of `log_mean`).
    pub log_se: f64,
    /// Kish effective sample size (sum w)^2 / sum w^2.
    pub ess: f64,
    pub n: usize,
    /// Replicas with a nonzero weight.
    pub n_alive: usize,
}

impl LogMeanEstimate {
    pub fn from_log_weights(w: &[f64]) -> Self {
        let n = w.len();
        let n_alive = w.iter().filter(|x| **x > f64::NEG_INFINITY).count();
        let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if n == 0 || m == f64::NEG_INFINITY {
            return Self { log_mean: f64::NEG_INFINITY, log_se: f64::INFINITY, ess: 0.0, n, n_alive };
        }
        let scaled: Vec<f64> = w.iter().map(|x| (x - m).exp()).collect();
        let (mean, se) = mean_se(&scaled);
        let sq: Vec<f64> = scaled.iter().map(|x| x * x).collect();
        let s1 = pairwise_sum(&scaled);
        let s2 = pairwise_sum(&sq);
        Self { log_mean: m + mean.ln(), log_se: se / mean, ess: s1 * s1 / s2, n, n_alive }
    }

    pub fn mean(&self) -> f64 {
        self.log_mean.exp()
    }

    /// Standard error in natural units.
    pub fn se(&self) -> f64 {
        self.log_se * self.mean()
    }
}
