//! Small numerical toolkit shared by the physics modules: adaptive quadrature,
//! bracketed root finding, log-space statistics and a few linear solvers.

pub mod linalg;
pub mod quad;
pub mod roots;
pub mod stats;

/// Geometric grid of `n` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Ordinary least squares fit of `y = intercept + slope * x`.
///
/// Returns `(intercept, slope, rms_residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum();
    (intercept, slope, (ss / n).sqrt())
}

/// Limit of the local slope `d log y / d log t` from tabulated positive
/// values, assuming a `1/log t` correction: local slopes between consecutive
/// points are regressed on `1/log t` and the intercept is returned together
/// with the rms residual of that regression.
pub fn extrapolated_log_slope(t: &[f64], y: &[f64]) -> (f64, f64) {
    assert!(t.len() == y.len() && t.len() >= 3);
    let mut inv = Vec::with_capacity(t.len() - 1);
    let mut slopes = Vec::with_capacity(t.len() - 1);
    for i in 0..t.len() - 1 {
        let (a, b) = (t[i].ln(), t[i + 1].ln());
        inv.push(2.0 / (a + b));
        slopes.push((y[i + 1].ln() - y[i].ln()) / (b - a));
    }
    let (intercept, _, rms) = linear_fit(&inv, &slopes);
    (intercept, rms)
}
