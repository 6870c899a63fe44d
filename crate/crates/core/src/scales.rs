//! The spatial scale `α(t)` and the almost-sure time scale `β(t)`.
//!
//! `α(t) = (t/s)^{1/d}` where `s` solves `κ(s)/s = (s/t)^{2/d}`; `β(t)` solves
//! `β/α(β)² = d log t`. Both are found by bracketing on a logarithmic scan
//! followed by bisection in `log s`.

use serde::Serialize;

use std::sync::Arc;

use crate::classify::{model_h, ClassLabel, ClassificationReport, HFn, Kappa};
use crate::error::{invalid, PamError, Result};
use crate::numerics::extrapolated_log_slope;
use crate::potential::{ModelKind, PotentialModel};

/// Half-width (in decades) of the scan window around the natural guess.
const SCAN_DECADES: f64 = 6.0;
const SCAN_POINTS: usize = 49;

/// Root of a fixed-point equation with diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleRoot {
    pub value: f64,
    /// relative residual of the defining equation at the root
    pub residual: f64,
    /// every bracketed root found on the scan grid (largest first)
    pub roots: Vec<f64>,
}

/// Finds the largest root of `g(x) = 0` in `x ∈ [lo, hi]` (logarithmic
/// variable). `g` must be positive to the left of the selected root; a
/// non-finite value counts as positive (the left side is where `κ` may be
/// unavailable only if the caller says so).
fn largest_root<G>(mut g: G, lo: f64, hi: f64, what: &str) -> Result<(f64, Vec<f64>)>
where
    G: FnMut(f64) -> Result<f64>,
{
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let mut xs = Vec::with_capacity(SCAN_POINTS);
    let mut gs = Vec::with_capacity(SCAN_POINTS);
    for i in 0..SCAN_POINTS {
        let x = hi - step * i as f64;
        xs.push(x);
        gs.push(g(x)?);
    }
    let mut brackets = Vec::new();
    for i in 0..SCAN_POINTS - 1 {
        // scanning downwards: root where g goes from <= 0 (right) to > 0 (left)
        if gs[i] <= 0.0 && gs[i + 1] > 0.0 {
            brackets.push((xs[i + 1], xs[i]));
        }
    }
    if brackets.is_empty() {
        let trace: Vec<String> =
            xs.iter().zip(&gs).step_by(24).map(|(x, v)| format!("{:.3e}:{:.3e}", x.exp(), v)).collect();
        return Err(PamError::NoBracket { lo: lo.exp(), hi: hi.exp(), trace: format!("{what}: {}", trace.join(", ")) });
    }
    let mut roots = Vec::with_capacity(brackets.len());
    for &(a, b) in &brackets {
        let (mut a, mut b) = (a, b);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if g(m)? > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        // pick the endpoint with the smaller residual
        let (ga, gb) = (g(a)?, g(b)?);
        roots.push(if ga.abs() <= gb.abs() { a } else { b });
    }
    Ok((roots[0], roots))
}

/// `log(κ(s)/s) - (2/d) log(s/t)` with `κ ≤ 0` treated as below the curve.
fn alpha_gap(kappa: &dyn Fn(f64) -> Result<f64>, d: usize, t: f64, x: f64) -> Result<f64> {
    let s = x.exp();
    let k = kappa(s)?;
    if !(k > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((k / s).ln() - 2.0 / d as f64 * (s / t).ln())
}

/// Spatial scale at time `t`: solves `κ(s)/s = (s/t)^{2/d}` for the largest
/// `s ∈ [10⁻⁶t, 10⁶t]` and returns `α = (t/s)^{1/d}`.
pub fn alpha_of_t(kappa: &dyn Fn(f64) -> Result<f64>, d: usize, t: f64) -> Result<ScaleRoot> {
    if d == 0 || !(t > 0.0) || !t.is_finite() {
        return invalid(format!("alpha needs d >= 1 and t > 0, got d = {d}, t = {t}"));
    }
    let c = t.ln();
    let span = SCAN_DECADES * std::f64::consts::LN_10;
    let (x, xs) = largest_root(|x| alpha_gap(kappa, d, t, x), c - span, c + span, "alpha")?;
    let s = x.exp();
    let rhs = (s / t).powf(2.0 / d as f64);
    let residual = ((kappa(s)? / s) - rhs).abs() / rhs;
    let alpha = |s: f64| (t / s).powf(1.0 / d as f64);
    Ok(ScaleRoot { value: alpha(s), residual, roots: xs.into_iter().map(|x| alpha(x.exp())).collect() })
}

/// Time scale: solves `b/α(b)² = d log t` for the largest `b`.
pub fn beta_of_t(alpha: &dyn Fn(f64) -> Result<f64>, d: usize, t: f64) -> Result<ScaleRoot> {
    if !(t > 1.0) || d == 0 {
        return invalid(format!("beta needs t > 1 and d >= 1, got t = {t}"));
    }
    let target = d as f64 * t.ln();
    // At small arguments the auxiliary function may be too small (or
    // non-positive) for α to exist; there b/α(b)² is below any positive
    // target, so such points count as lying left of the root.
    let gap = |x: f64| -> Result<f64> {
        let b = x.exp();
        match alpha(b) {
            Ok(a) => Ok(target.ln() - (b / (a * a)).ln()),
            Err(PamError::NoBracket { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    };
    let c = target.ln();
    let span = SCAN_DECADES * std::f64::consts::LN_10;
    let (x, xs) = largest_root(gap, c - span, c + span, "beta")?;
    let b = x.exp();
    let a = alpha(b)?;
    Ok(ScaleRoot {
        value: b,
        residual: ((b / (a * a)) - target).abs() / target,
        roots: xs.into_iter().map(f64::exp).collect(),
    })
}

/// `H(s)/s` at `s = p t α(pt)^{-d}`: the leading term of `(1/t) log⟨U(t)^p⟩`
/// up to the factor `p`.
pub fn leading_term(
    h: &dyn Fn(f64) -> Result<f64>,
    alpha: &dyn Fn(f64) -> Result<f64>,
    d: usize,
    p: f64,
    t: f64,
) -> Result<f64> {
    if !(p > 0.0) || !(t > 0.0) {
        return invalid("leading term needs p > 0 and t > 0");
    }
    let a = alpha(p * t)?;
    let s = p * t / a.powi(d as i32);
    Ok(h(s)? / s)
}

/// `α` and `β` for one model class in dimension `d`, together with the
/// shape parameter `ρ` that belongs to the chosen normalisation of `κ`.
#[derive(Debug, Clone)]
pub struct ScalePair {
    pub d: usize,
    pub kappa: Kappa,
    pub rho: f64,
    /// `α ≡ 1` (single-peak class)
    pub unit_alpha: bool,
}

impl ScalePair {
    pub fn new(kappa: Kappa, rho: f64, d: usize, unit_alpha: bool) -> Self {
        Self { d, kappa, rho, unit_alpha }
    }

    /// Scales from a classification of a bare `H`, with the `κ` recipe used
    /// by the classifier. `α ≡ 1` for the single-peak class.
    pub fn from_report(h: HFn, report: &ClassificationReport, d: usize) -> Self {
        Self::new(Kappa::new(h, report.gamma), report.rho, d, report.class_label == Some(ClassLabel::SinglePeak))
    }

    /// Scales for a potential model. Tail families use the tilting-point
    /// auxiliary function `κ(t) = t/f'(r(t))` (with `ρ = 1`), which is
    /// positive for every `t > 0`; the double-exponential law uses `κ(t) = t`
    /// with its own `ρ`. Both are asymptotically equivalent to the generic
    /// recipe but stay usable at small arguments, where `β` needs them.
    pub fn for_model(model: &PotentialModel, report: &ClassificationReport, d: usize) -> Self {
        let unit = report.class_label == Some(ClassLabel::SinglePeak);
        match model.kind {
            ModelKind::DoubleExponential { rho } => Self::new(Kappa::from_fn(Arc::new(Ok)), rho, d, unit),
            ModelKind::TailFamily { .. } => {
                let m = *model;
                let kappa = Kappa::from_fn(Arc::new(move |t| {
                    let r = m.laplace_point_r(t)?;
                    Ok(t / m.tail_slope_at(r))
                }));
                Self::new(kappa, 1.0, d, unit)
            }
            ModelKind::Constant { .. } => Self::from_report(model_h(model), report, d),
        }
    }

    pub fn alpha_root(&self, t: f64) -> Result<ScaleRoot> {
        if self.unit_alpha {
            return Ok(ScaleRoot { value: 1.0, residual: 0.0, roots: vec![1.0] });
        }
        alpha_of_t(&|s| self.kappa.eval(s), self.d, t)
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.alpha_root(t)?.value)
    }

    pub fn beta_root(&self, t: f64) -> Result<ScaleRoot> {
        beta_of_t(&|b| self.alpha(b), self.d, t)
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        Ok(self.beta_root(t)?.value)
    }

    /// Regular-variation index of `α` on a grid (local log-log slopes
    /// extrapolated in `1/log t`).
    pub fn alpha_index(&self, t_grid: &[f64]) -> Result<f64> {
        let a = t_grid.iter().map(|&t| self.alpha(t)).collect::<Result<Vec<_>>>()?;
        Ok(extrapolated_log_slope(t_grid, &a).0)
    }
}

/// `(1-γ)/(d+2-dγ)`: the index of `α` predicted by regular variation.
pub fn predicted_alpha_index(gamma: f64, d: usize) -> f64 {
    let d = d as f64;
    (1.0 - gamma) / (d + 2.0 - d * gamma)
}
