use super::{AndersonOperator, LatticeBox};
use crate::error::{invalid, PamError, Result};
use crate::numerics::linalg::conjugate_gradient;

/// Largest tolerated probability flux through the truncation boundary.
pub const LEAK_THRESHOLD: f64 = 1e-6;

/// Resolvent `G_λ(x, y)` of the simple random walk restricted to a box.
#[derive(Debug, Clone)]
pub struct GreenMatrix {
    pub lbox: LatticeBox,
    pub lambda: f64,
    /// row-major `|box| × |box|`
    pub values: Vec<f64>,
    /// largest boundary flux `Σ_{x∈∂T} n_out(x) g_y(x)` over the columns
    pub leak: f64,
}

impl GreenMatrix {
    pub fn n(&self) -> usize {
        self.lbox.len()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.n() + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.n();
        &self.values[x * n..(x + 1) * n]
    }
}

/// `G_λ(x,y) = ∫_0^∞ e^{-λs} p_s(x,y) ds` for `x, y` in `lbox`, approximated by
/// solving `(λ - Δ^d) g = δ_y` on `truncation` with zero boundary condition.
///
/// The truncated resolvent loses exactly `Σ_{x∈∂T} n_out(x) g(x) / λ` of its
/// total mass through the boundary; when that flux exceeds
/// [`LEAK_THRESHOLD`] the margin is reported as too small.
pub fn green_function(lambda: f64, lbox: &LatticeBox, truncation: &LatticeBox) -> Result<GreenMatrix> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid(format!("resolvent parameter must be positive, got {lambda}"));
    }
    if !lbox.enlarged(1).is_subset_of(truncation) {
        return invalid("truncation must contain the box with margin at least 1");
    }
    let op = AndersonOperator::free(truncation);
    let nt = op.dim();
    // (λ - Δ) has diagonal λ + 2d
    let diag: Vec<f64> = op.diagonal().iter().map(|d| lambda - d).collect();
    let mut out_count = vec![0usize; nt];
    let mut nb = Vec::new();
    for (i, c) in out_count.iter_mut().enumerate() {
        *c = truncation.neighbors(i, &mut nb);
    }
    let n = lbox.len();
    let mut values = vec![0.0; n * n];
    let mut leak: f64 = 0.0;
    let inner: Vec<usize> = lbox.sites().map(|z| truncation.index_of(&z).expect("box inside truncation")).collect();
    for (col, &y) in inner.iter().enumerate() {
        let mut rhs = vec![0.0; nt];
        rhs[y] = 1.0;
        let g = conjugate_gradient(
            |x, out| {
                // apply_shifted gives (Δ - λ)x
                op.apply_shifted(x, out, lambda);
                out.iter_mut().for_each(|v| *v = -*v);
            },
            &diag,
            &rhs,
            None,
            1e-14,
            10 * nt + 100,
        )?;
        let flux: f64 = g.iter().zip(&out_count).map(|(gi, &c)| gi * c as f64).sum();
        leak = leak.max(flux);
        for (row, &x) in inner.iter().enumerate() {
            values[row * n + col] = g[x];
        }
    }
    // the exact matrix is symmetric; remove solver round-off
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (values[i * n + j] + values[j * n + i]);
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    if leak > LEAK_THRESHOLD {
        return Err(PamError::MarginTooSmall { mass: leak, threshold: LEAK_THRESHOLD });
    }
    Ok(GreenMatrix { lbox: lbox.clone(), lambda, values, leak })
}

/// Smallest margin whose truncation passes the boundary-flux check.
pub fn green_function_auto(lambda: f64, lbox: &LatticeBox) -> Result<GreenMatrix> {
    let mut margin = 1;
    loop {
        match green_function(lambda, lbox, &lbox.enlarged(margin)) {
            Err(PamError::MarginTooSmall { .. }) if margin < 4096 => margin *= 2,
            other => return other,
        }
    }
}
