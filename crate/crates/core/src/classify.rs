//! Regular-variation data of `H` and the four universality classes.
//!
//! From values of `H` on a geometric grid the classifier estimates the index
//! `γ`, builds the auxiliary function `κ`, fits the shape parameter `ρ` of
//! `Ĥ`, and decides the limit `κ* = lim κ(t)/t`.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PamError, Result};
use crate::numerics::quad::gauss_legendre;
use crate::numerics::{extrapolated_log_slope, geometric_grid, linear_fit};
use crate::potential::{ModelKind, PotentialModel};

/// A cumulant generating function as a shareable callable.
pub type HFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Indices closer than this to 1 are treated as exactly 1.
pub const GAMMA_ONE_TOL: f64 = 0.05;

/// Slope band in `log(κ/t)` against `log log t` inside which `κ*` is finite.
const FINITE_SLOPE: f64 = 0.05;
/// Slopes beyond this magnitude decide `κ* ∈ {0, ∞}`.
const DIVERGENT_SLOPE: f64 = 0.15;

const Y_GRID: [f64; 3] = [0.5, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassLabel {
    SinglePeak,
    DoubleExponential,
    AlmostBounded,
    BoundedAbove,
}

impl ClassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::SinglePeak => "SinglePeak",
            ClassLabel::DoubleExponential => "DoubleExponential",
            ClassLabel::AlmostBounded => "AlmostBounded",
            ClassLabel::BoundedAbove => "BoundedAbove",
        }
    }

    /// The label table: `γ > 1` or `κ* = ∞` single peak, `κ*` finite and
    /// positive double exponential, `κ* = 0` almost bounded (all for `γ = 1`),
    /// `γ < 1` bounded above.
    pub fn from_parameters(gamma: f64, kappa_star: KappaStar) -> Option<Self> {
        if gamma > 1.0 + GAMMA_ONE_TOL {
            return Some(ClassLabel::SinglePeak);
        }
        if gamma < 1.0 - GAMMA_ONE_TOL {
            return Some(ClassLabel::BoundedAbove);
        }
        match kappa_star {
            KappaStar::Infinite => Some(ClassLabel::SinglePeak),
            KappaStar::Finite(_) => Some(ClassLabel::DoubleExponential),
            KappaStar::Zero => Some(ClassLabel::AlmostBounded),
            KappaStar::Undecidable => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", content = "value", rename_all = "lowercase")]
pub enum KappaStar {
    Zero,
    Finite(f64),
    Infinite,
    Undecidable,
}

impl KappaStar {
    pub fn value(&self) -> f64 {
        match *self {
            KappaStar::Zero => 0.0,
            KappaStar::Finite(v) => v,
            KappaStar::Infinite => f64::INFINITY,
            KappaStar::Undecidable => f64::NAN,
        }
    }
}

/// Index estimate with its fit diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    /// rms residual of the local-slope regression
    pub residual: f64,
    /// plain least-squares slope of `log|H|` against `log t` on the upper half
    pub raw_slope: f64,
}

/// Index of regular variation of `|H|`.
///
/// Local slopes `d log|H| / d log t` on the upper half of the grid carry
/// slowly varying corrections of order `1/log t` (for example `t log t` has
/// local slope `1 + 1/log t`), so they are regressed against `1/log t` and
/// the intercept is returned.
pub fn estimate_gamma(h: &dyn Fn(f64) -> Result<f64>, t_grid: &[f64]) -> Result<GammaEstimate> {
    if t_grid.len() < 6 {
        return invalid("gamma estimation needs at least 6 grid points");
    }
    if t_grid[t_grid.len() - 1] / t_grid[0] < 1e4 - 1e-6 {
        return invalid("gamma estimation needs a grid spanning at least four decades");
    }
    let mut logs = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let v = h(t)?;
        if !v.is_finite() || v == 0.0 {
            return Err(PamError::NonFinite { t, value: v });
        }
        logs.push((t.ln(), v.abs().ln()));
    }
    let upper = &logs[logs.len() / 2..];
    let (_, raw_slope, _) =
        linear_fit(&upper.iter().map(|p| p.0).collect::<Vec<_>>(), &upper.iter().map(|p| p.1).collect::<Vec<_>>());
    let (gamma, residual) = extrapolated_log_slope(
        &upper.iter().map(|p| p.0.exp()).collect::<Vec<_>>(),
        &upper.iter().map(|p| p.1.exp()).collect::<Vec<_>>(),
    );
    Ok(GammaEstimate { gamma: gamma.max(0.0), residual, raw_slope })
}

/// The auxiliary function `κ`: `|H|` when `γ ≠ 1`, otherwise
/// `H(t) - ∫_1^t H(s)/s ds`.
#[derive(Clone)]
pub struct Kappa {
    h: HFn,
    integral_form: bool,
    /// `∫_k^{k+1} H(e^y) dy` per integer `k`
    cells: Arc<Mutex<BTreeMap<i64, f64>>>,
}

const CELL_NODES: usize = 16;

impl Kappa {
    pub fn new(h: HFn, gamma: f64) -> Self {
        Self { h, integral_form: (gamma - 1.0).abs() <= GAMMA_ONE_TOL, cells: Arc::new(Mutex::new(BTreeMap::new())) }
    }

    /// `κ(t) = t` (the double-exponential normalisation with `κ* = 1`), or any
    /// other closed form supplied by the caller.
    pub fn from_fn(f: HFn) -> Self {
        Self { h: f, integral_form: false, cells: Arc::new(Mutex::new(BTreeMap::new())) }
    }

    pub fn is_integral_form(&self) -> bool {
        self.integral_form
    }

    fn segment(&self, a: f64, b: f64) -> Result<f64> {
        let (x, w) = gauss_legendre(CELL_NODES);
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            acc += wi * (self.h)((c + r * xi).exp())?;
        }
        Ok(acc * r)
    }

    fn cell(&self, k: i64) -> Result<f64> {
        if let Some(v) = self.cells.lock().expect("cache lock").get(&k) {
            return Ok(*v);
        }
        let v = self.segment(k as f64, k as f64 + 1.0)?;
        self.cells.lock().expect("cache lock").insert(k, v);
        Ok(v)
    }

    /// `∫_1^t H(s)/s ds = ∫_0^{log t} H(e^y) dy`.
    pub fn log_integral(&self, t: f64) -> Result<f64> {
        let y = t.ln();
        let k = y.floor() as i64;
        let mut acc = 0.0;
        if k >= 0 {
            for j in 0..k {
                acc += self.cell(j)?;
            }
        } else {
            for j in k..0 {
                acc -= self.cell(j)?;
            }
        }
        Ok(acc + self.segment(k as f64, y)?)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return invalid(format!("kappa needs t > 0, got {t}"));
        }
        let h = (self.h)(t)?;
        if self.integral_form {
            Ok(h - self.log_integral(t)?)
        } else {
            Ok(h.abs())
        }
    }
}

impl std::fmt::Debug for Kappa {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kappa").field("integral_form", &self.integral_form).finish()
    }
}

/// `Ĥ(y)/ρ`: `y log y` for `γ = 1`, `(y - y^γ)/(1-γ)` otherwise.
pub fn h_hat_unit(gamma: f64, y: f64) -> f64 {
    if (gamma - 1.0).abs() <= GAMMA_ONE_TOL {
        y * y.ln()
    } else {
        (y - y.powf(gamma)) / (1.0 - gamma)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoFit {
    pub rho: f64,
    /// reference time at which `(H(ty) - yH(t))/κ(t)` was formed
    pub t_ref: f64,
    pub y: Vec<f64>,
    pub observed: Vec<f64>,
    /// `observed - ρ Ĥ(y)/ρ` per y
    pub residuals: Vec<f64>,
}

/// Least-squares `ρ` from `(H(ty) - yH(t))/κ(t) ≈ ρ ĥ(y)` over `y ∈ {1/2, 2, 4}`.
pub fn estimate_rho(h: &dyn Fn(f64) -> Result<f64>, kappa: &Kappa, gamma: f64, t_ref: f64) -> Result<RhoFit> {
    let k = kappa.eval(t_ref)?;
    if !(k > 0.0) {
        return Err(PamError::NonPositiveKappa { t: t_ref, value: k });
    }
    let ht = h(t_ref)?;
    let mut observed = Vec::new();
    let mut unit = Vec::new();
    for &y in &Y_GRID {
        observed.push((h(t_ref * y)? - y * ht) / k);
        unit.push(h_hat_unit(gamma, y));
    }
    let rho = observed.iter().zip(&unit).map(|(o, u)| o * u).sum::<f64>() / unit.iter().map(|u| u * u).sum::<f64>();
    let residuals = observed.iter().zip(&unit).map(|(o, u)| o - rho * u).collect();
    Ok(RhoFit { rho, t_ref, y: Y_GRID.to_vec(), observed, residuals })
}

/// `ρ` extrapolated along the grid.
#[derive(Debug, Clone, Serialize)]
pub struct RhoExtrapolation {
    pub rho: f64,
    /// reference times and the single-time fits `ρ(t_ref)`
    pub t_ref: Vec<f64>,
    pub rho_at: Vec<f64>,
    /// fit at the largest reference time
    pub top: RhoFit,
    /// `observed - ρ ĥ(y)` at the largest reference time with the
    /// extrapolated `ρ`
    pub residuals: Vec<f64>,
}

/// `κ` and `ρ` for a given index; fails if `κ ≤ 0` somewhere on the grid.
///
/// Single-time fits `ρ(t)` approach the limit with a `1/log t` correction in
/// the almost-bounded models, so `ρ(t)` is formed at every grid point of the
/// upper half with `4t` still on the grid and extrapolated linearly in
/// `1/log t`.
pub fn estimate_kappa_rho(h: HFn, gamma: f64, t_grid: &[f64]) -> Result<(Kappa, RhoExtrapolation)> {
    let kappa = Kappa::new(h.clone(), gamma);
    for &t in t_grid {
        let k = kappa.eval(t)?;
        if !(k > 0.0) {
            return Err(PamError::NonPositiveKappa { t, value: k });
        }
    }
    let t_max = t_grid[t_grid.len() - 1];
    let t_mid = t_grid[t_grid.len() / 2];
    let mut refs: Vec<f64> =
        t_grid.iter().copied().filter(|t| *t >= t_mid && *t * Y_GRID[2] <= t_max * (1.0 + 1e-12)).collect();
    if refs.is_empty() {
        refs.push(t_max / Y_GRID[2]);
    }
    let fits = refs.iter().map(|&t| estimate_rho(&*h, &kappa, gamma, t)).collect::<Result<Vec<_>>>()?;
    let rho_at: Vec<f64> = fits.iter().map(|f| f.rho).collect();
    let rho = if refs.len() >= 3 {
        let inv: Vec<f64> = refs.iter().map(|t| 1.0 / t.ln()).collect();
        linear_fit(&inv, &rho_at).0
    } else {
        rho_at[rho_at.len() - 1]
    };
    let top = fits.last().expect("nonempty").clone();
    let residuals = top.observed.iter().zip(&top.y).map(|(o, &y)| o - rho * h_hat_unit(gamma, y)).collect();
    Ok((kappa, RhoExtrapolation { rho, t_ref: refs, rho_at, top, residuals }))
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaStarFit {
    pub kappa_star: KappaStar,
    /// slope of `log(κ/t)` against `log log t` on the top decade
    pub loglog_slope: f64,
    /// `κ(t)/t` at the largest grid point
    pub ratio_at_top: f64,
}

/// Decides `κ* = lim κ(t)/t` from the top decade of the grid.
///
/// In every catalog model `κ(t)/t` behaves like a power of `log t`, so the
/// slope of `log(κ/t)` against `log log t` separates the three regimes; an
/// intermediate slope is reported as undecidable.
pub fn estimate_kappa_star(kappa: &Kappa, t_grid: &[f64]) -> Result<KappaStarFit> {
    let t_max = t_grid[t_grid.len() - 1];
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut ratio_at_top = f64::NAN;
    for &t in t_grid.iter().filter(|t| **t >= t_max / 10.0 * (1.0 - 1e-12)) {
        let r = kappa.eval(t)? / t;
        if !(r > 0.0) {
            return Err(PamError::NonPositiveKappa { t, value: r * t });
        }
        x.push(t.ln().ln());
        y.push(r.ln());
        ratio_at_top = r;
    }
    let slope = if x.len() >= 2 { linear_fit(&x, &y).1 } else { 0.0 };
    let kappa_star = if slope.abs() <= FINITE_SLOPE {
        KappaStar::Finite(ratio_at_top)
    } else if slope >= DIVERGENT_SLOPE {
        KappaStar::Infinite
    } else if slope <= -DIVERGENT_SLOPE {
        KappaStar::Zero
    } else {
        KappaStar::Undecidable
    };
    Ok(KappaStarFit { kappa_star, loglog_slope: slope, ratio_at_top })
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub gamma: f64,
    pub rho: f64,
    pub kappa_star: KappaStar,
    /// `None` when the existence of `κ*` cannot be decided
    pub class_label: Option<ClassLabel>,
    pub t_grid: Vec<f64>,
    /// `(H(ty) - yH(t))/κ(t) - ρ ĥ(y)` at `y ∈ {1/2, 2, 4}`
    pub residuals: Vec<f64>,
    pub gamma_fit: GammaEstimate,
    pub rho_fit: RhoExtrapolation,
    pub kappa_star_fit: Option<KappaStarFit>,
}

/// Default classification grid: 40 geometric points from `10^2` to `t_max`.
pub fn default_grid(t_max: f64) -> Vec<f64> {
    geometric_grid(1e2, t_max, 40)
}

/// Full classification of an `H` callable on a grid.
pub fn classify_h(h: HFn, t_grid: &[f64]) -> Result<ClassificationReport> {
    let gamma_fit = estimate_gamma(&*h, t_grid)?;
    let gamma = gamma_fit.gamma;
    let (kappa, rho_fit) = estimate_kappa_rho(h, gamma, t_grid)?;
    let (kappa_star, kappa_star_fit) = if (gamma - 1.0).abs() <= GAMMA_ONE_TOL {
        let fit = estimate_kappa_star(&kappa, t_grid)?;
        (fit.kappa_star, Some(fit))
    } else if gamma < 1.0 {
        (KappaStar::Zero, None)
    } else {
        (KappaStar::Infinite, None)
    };
    Ok(ClassificationReport {
        gamma,
        rho: rho_fit.rho,
        kappa_star,
        class_label: ClassLabel::from_parameters(gamma, kappa_star),
        t_grid: t_grid.to_vec(),
        residuals: rho_fit.residuals.clone(),
        gamma_fit,
        rho_fit,
        kappa_star_fit,
    })
}

/// `H` of a model as a shareable callable.
pub fn model_h(model: &PotentialModel) -> HFn {
    let m = *model;
    Arc::new(move |t| m.cumulant_h(t))
}

/// Classifies a potential model on the default grid up to `t_max`.
pub fn classify(model: &PotentialModel, t_max: f64) -> Result<ClassificationReport> {
    if let ModelKind::Constant { .. } = model.kind {
        return invalid("a constant potential is degenerate and has no tail class");
    }
    if !(t_max >= 1e6) {
        return invalid("classification needs t_max >= 1e6 (four decades above 1e2)");
    }
    classify_h(model_h(model), &default_grid(t_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quad::integrate;
    use crate::potential::catalog_model;
    use statrs::function::gamma::ln_gamma;

    fn grid() -> Vec<f64> {
        default_grid(1e8)
    }

    #[test]
    fn gamma_of_exact_and_log_corrected_laws() {
        let g = estimate_gamma(&|t: f64| Ok(t.sqrt()), &grid()).unwrap();
        assert!((g.gamma - 0.5).abs() < 1e-3);
        let g = estimate_gamma(&|t: f64| Ok(ln_gamma(1.0 + t)), &grid()).unwrap();
        assert!((g.gamma - 1.0).abs() < 0.02, "{}", g.gamma);
        let g = estimate_gamma(&|t: f64| Ok(t * t.ln().powi(2)), &grid()).unwrap();
        assert!((g.gamma - 1.0).abs() < 0.02, "{}", g.gamma);
    }

    #[test]
    fn gamma_rejects_non_finite_h() {
        let e = estimate_gamma(&|t: f64| Ok(if t > 1e5 { f64::NAN } else { t }), &grid());
        assert!(matches!(e, Err(PamError::NonFinite { .. })));
    }

    #[test]
    fn kappa_integral_recipe_for_gamma_function() {
        // κ(t) = H(t) - ∫_1^t H(s)/s ds with H = log Γ(1+t) behaves like t
        let h: HFn = Arc::new(|t: f64| Ok(ln_gamma(1.0 + t)));
        let k = Kappa::new(h, 1.0);
        for t in [1e4, 1e6] {
            let integral = integrate(|s: f64| ln_gamma(1.0 + s) / s, 1.0, t, 1e-12, 1e-14).unwrap().value;
            let exact = ln_gamma(1.0 + t) - integral;
            let got = k.eval(t).unwrap();
            assert!((got - exact).abs() < 1e-8 * t, "{t}: {got} vs {exact}");
            assert!((got / t - 1.0).abs() < 3e-3);
        }
    }

    #[test]
    fn log_integral_of_constant_and_linear() {
        let k = Kappa::new(Arc::new(|_| Ok(1.0)), 1.0);
        assert!((k.log_integral(50.0).unwrap() - 50f64.ln()).abs() < 1e-13);
        assert!((k.log_integral(0.2).unwrap() - 0.2f64.ln()).abs() < 1e-13);
        let k = Kappa::new(Arc::new(Ok), 1.0);
        assert!((k.log_integral(7.5).unwrap() - 6.5).abs() < 1e-11);
    }

    #[test]
    fn rho_self_consistency_for_square_root() {
        let h: HFn = Arc::new(|t: f64| Ok(t.sqrt()));
        let (_, fit) = estimate_kappa_rho(h, 0.5, &grid()).unwrap();
        let fit = fit.top;
        for (o, y) in fit.observed.iter().zip(&fit.y) {
            let model = fit.rho * (y - y.sqrt()) / 0.5;
            assert!((o - model).abs() <= 0.01 * model.abs());
        }
    }

    #[test]
    fn double_exponential_class() {
        let r = classify(&catalog_model("double-exponential").unwrap(), 1e8).unwrap();
        assert_eq!(r.class_label, Some(ClassLabel::DoubleExponential));
        assert!((r.kappa_star.value() - 1.0).abs() < 0.05);
        assert!((r.rho - 1.0).abs() < 0.05, "{}", r.rho);
    }

    #[test]
    fn square_root_tail_is_single_peak() {
        let r = classify(&catalog_model("single-peak").unwrap(), 1e8).unwrap();
        assert_eq!(r.class_label, Some(ClassLabel::SinglePeak), "{r:?}");
    }

    #[test]
    fn catalog_labels() {
        let expect = [
            ("unbounded-case-3", ClassLabel::AlmostBounded),
            ("bounded-case-3", ClassLabel::AlmostBounded),
            ("bounded-case-4", ClassLabel::BoundedAbove),
        ];
        for (name, label) in expect {
            let r = classify(&catalog_model(name).unwrap(), 1e8).unwrap();
            assert_eq!(r.class_label, Some(label), "{name}: {r:?}");
        }
    }

    #[test]
    fn quadratic_tail_kappa_matches_tilting_formula() {
        let m = catalog_model("unbounded-case-3").unwrap();
        let r = classify(&m, 1e8).unwrap();
        assert!((r.rho - 1.0).abs() < 0.05, "rho {}", r.rho);
        let k = Kappa::new(model_h(&m), 1.0);
        let t = 1e7;
        let rt = m.laplace_point_r(t).unwrap();
        let ratio = k.eval(t).unwrap() / (t / (2.0 * rt));
        assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn scale_and_shift_invariance() {
        let base: HFn = Arc::new(|t: f64| Ok(ln_gamma(1.0 + t)));
        let scaled: HFn = Arc::new(|t: f64| Ok(ln_gamma(1.0 + 2.0 * t)));
        let shifted: HFn = Arc::new(|t: f64| Ok(ln_gamma(1.0 + t) + 0.7 * t));
        let g = grid();
        let a = classify_h(base, &g).unwrap();
        let b = classify_h(scaled, &g).unwrap();
        let c = classify_h(shifted, &g).unwrap();
        assert!((a.gamma - b.gamma).abs() < 0.01);
        assert!((a.gamma - c.gamma).abs() < 0.02);
        assert!((a.rho - c.rho).abs() < 0.02);
        assert_eq!(a.class_label, c.class_label);
    }

    #[test]
    fn label_partition() {
        for g in [0.0, 0.5, 0.99, 1.0, 1.01, 1.5, 3.0] {
            for ks in [KappaStar::Zero, KappaStar::Finite(2.0), KappaStar::Infinite] {
                assert!(ClassLabel::from_parameters(g, ks).is_some());
            }
        }
        assert_eq!(ClassLabel::from_parameters(1.0, KappaStar::Undecidable), None);
    }
}
