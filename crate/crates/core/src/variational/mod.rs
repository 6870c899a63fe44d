//! Variational constants of the moment and almost-sure asymptotics.
//!
//! Continuum problems are discretised on [`Grid`]s: second-order finite
//! volumes for the Dirichlet energy, nodal quadrature for the potential terms.
//! The discrete problem on `Z^d` is the unit-spacing Cartesian grid.

pub mod profile;

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, PamError, Result};
use crate::lattice::{eig, EigCount, LatticeField};
use crate::numerics::linalg::{conjugate_gradient, solve_tridiagonal};
use crate::numerics::stats::log_sum_exp;

pub use profile::{unit_sphere_area, Discretization, Grid, Profile};

/// Floor for `g²` inside logarithms and negative powers.
const SQ_FLOOR: f64 = 1e-300;
/// Projected-gradient tolerance of the gradient flow.
pub const FLOW_TOL: f64 = 1e-8;
pub const FLOW_MAX_ITER: usize = 100_000;
/// Negative log-Sobolev gaps above this are attributed to discretisation.
pub const LSI_NEGATIVE_TOL: f64 = 1e-6;

/// `χ(ρ) = ρd(1 - ½ log(ρ/π))`.
pub fn chi_closed_form(rho: f64, d: usize) -> f64 {
    rho * d as f64 * (1.0 - 0.5 * (rho / PI).ln())
}

/// `χ̃(ρ) = χ(ρ) + ρ log(ρ/e)`.
pub fn chi_tilde_closed_form(rho: f64, d: usize) -> f64 {
    chi_closed_form(rho, d) + rho * (rho / E).ln()
}

/// `λ(ψ_ρ) = ρ - ρd + ρ(d/2) log(ρ/π)`.
pub fn lambda_parabola_closed_form(rho: f64, d: usize) -> f64 {
    let d = d as f64;
    rho - rho * d + rho * d / 2.0 * (rho / PI).ln()
}

/// Value of the bounded-case functional at the Gaussian `g_ρ`:
/// `ρd/2 + ρ(γ^{-d/2}(ρ/π)^{(γ-1)d/2} - 1)/(1-γ)`.
pub fn gaussian_gamma_value(rho: f64, gamma: f64, d: usize) -> f64 {
    let d = d as f64;
    rho * d / 2.0 + rho * (gamma.powf(-d / 2.0) * (rho / PI).powf((gamma - 1.0) * d / 2.0) - 1.0) / (1.0 - gamma)
}

/// Grid resolving `g_ρ`: `h = 0.025/√ρ`, `L = 5/√ρ`.
pub fn default_grid(rho: f64, d: usize, radial: bool) -> Result<Grid> {
    if !(rho > 0.0) {
        return invalid("rho must be positive");
    }
    let s = rho.sqrt();
    if radial {
        Grid::radial(d, 0.025 / s, 5.0 / s)
    } else {
        Grid::cartesian(d, 0.025 / s, 5.0 / s)
    }
}

/// The potential part `-Σ w Φ(g²)` of a functional `‖∇g‖² - ∫ Φ(g²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `Φ(s) = ρ s log s`
    Entropy { rho: f64 },
    /// `Φ(s) = ρ (s - s^γ)/(1 - γ)`, `0 < γ < 1`
    Power { rho: f64, gamma: f64 },
}

impl Nonlinearity {
    fn phi(&self, s: f64) -> f64 {
        match *self {
            Nonlinearity::Entropy { rho } => {
                if s > 0.0 {
                    rho * s * s.ln()
                } else {
                    0.0
                }
            }
            Nonlinearity::Power { rho, gamma } => rho * (s - s.powf(gamma)) / (1.0 - gamma),
        }
    }

    fn dphi(&self, s: f64) -> f64 {
        let s = s.max(SQ_FLOOR);
        match *self {
            Nonlinearity::Entropy { rho } => rho * (s.ln() + 1.0),
            Nonlinearity::Power { rho, gamma } => rho * (1.0 - gamma * s.powf(gamma - 1.0)) / (1.0 - gamma),
        }
    }

    /// `g Φ'(g²)` with its limit at `g = 0`.
    fn g_dphi(&self, g: f64) -> f64 {
        if g != 0.0 {
            return g * self.dphi(g * g);
        }
        match *self {
            Nonlinearity::Entropy { .. } => 0.0,
            Nonlinearity::Power { rho, gamma } => {
                if gamma > 0.5 {
                    0.0
                } else if gamma == 0.5 {
                    -rho * gamma / (1.0 - gamma)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// `‖∇g‖² - Σ_i w_i Φ(g_i²)` on the grid of `g`.
pub fn functional(g: &Profile, nl: Nonlinearity) -> f64 {
    let disc = g.grid.discretize();
    value_with(&disc, &g.values, nl)
}

fn value_with(disc: &Discretization, g: &[f64], nl: Nonlinearity) -> f64 {
    let pot: f64 = g.iter().zip(&disc.weights).map(|(x, w)| w * nl.phi(x * x)).sum();
    disc.energy(g) - pot
}

#[derive(Debug, Clone, Serialize)]
pub struct GridMeta {
    pub grid: Grid,
    pub nodes: usize,
    pub half_width: f64,
}

impl GridMeta {
    pub fn of(grid: &Grid) -> Self {
        Self { grid: grid.clone(), nodes: grid.len(), half_width: grid.half_width() }
    }
}

#[derive(Debug, Clone)]
pub struct VariationalSolution {
    pub value: f64,
    pub minimizer: Profile,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub grid_meta: GridMeta,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// initial implicit step
    pub tau: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { tol: FLOW_TOL, max_iter: FLOW_MAX_ITER, tau: 1.0 }
    }
}

/// Minimises `‖∇g‖² - ∫Φ(g²)` over nonnegative unit-`L²` profiles.
///
/// Normalised gradient flow, semi-implicit: each step solves
/// `(W + τA + τW(c - Φ'(g²))) g̃ = W g` and renormalises, where `W` holds the
/// cell volumes and `c = max Φ'(g²)` keeps the matrix an M-matrix (so `g̃ ≥ 0`).
/// Steps that raise the functional are retried with `τ/4`; accepted steps
/// double `τ`. Fixed points are exactly the constrained critical points.
/// Terminates when the `W`-norm of the projected gradient drops below
/// `opts.tol`, restricted to the feasible cone at nodes where `g = 0`.
pub fn minimize(init: &Profile, nl: Nonlinearity, opts: FlowOptions) -> Result<VariationalSolution> {
    let grid = init.grid.clone();
    let disc = grid.discretize();
    let w = &disc.weights;
    let n = grid.len();
    let adiag = disc.diagonal();
    let mut g: Vec<f64> = init.values.iter().map(|x| x.abs()).collect();
    normalize(&mut g, w)?;
    let mut value = value_with(&disc, &g, nl);
    let mut tau = opts.tau;
    let mut grad_norm = projected_gradient_norm(&disc, &g, nl);
    let mut iterations = 0;
    let mut ag = vec![0.0; n];
    while grad_norm >= opts.tol {
        if iterations >= opts.max_iter {
            return Err(PamError::NotConverged { what: "normalised gradient flow", iterations, residual: grad_norm });
        }
        iterations += 1;
        let dphi: Vec<f64> = g.iter().map(|x| nl.dphi(x * x)).collect();
        let c = dphi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let diag: Vec<f64> = (0..n).map(|i| w[i] + tau * (adiag[i] + w[i] * (c - dphi[i]))).collect();
        let rhs: Vec<f64> = g.iter().zip(w).map(|(x, w)| x * w).collect();
        let mut next = if disc.chain {
            let mut off = vec![0.0; n];
            for &(i, _, cij) in &disc.edges {
                off[i] = -tau * cij;
            }
            let lower: Vec<f64> = (0..n).map(|i| if i > 0 { off[i - 1] } else { 0.0 }).collect();
            solve_tridiagonal(&lower, &diag, &off, &rhs)
        } else {
            let mut apply = |x: &[f64], out: &mut [f64]| {
                disc.apply(x, &mut ag);
                for i in 0..n {
                    out[i] = tau * ag[i] + (diag[i] - tau * adiag[i]) * x[i];
                }
            };
            let mut x = conjugate_gradient(&mut apply, &diag, &rhs, Some(&g), 1e-12, 10 * n + 100)?;
            // one refinement pass on the true residual
            let mut mx = vec![0.0; n];
            apply(&x, &mut mx);
            let r: Vec<f64> = rhs.iter().zip(&mx).map(|(b, m)| b - m).collect();
            if r.iter().any(|v| *v != 0.0) {
                let dx = conjugate_gradient(&mut apply, &diag, &r, None, 1e-8, 10 * n + 100)?;
                for (a, b) in x.iter_mut().zip(&dx) {
                    *a += b;
                }
            }
            x
        };
        for x in next.iter_mut() {
            *x = x.max(0.0);
        }
        normalize(&mut next, w)?;
        let next_value = value_with(&disc, &next, nl);
        if next_value <= value + 1e-13 * (1.0 + value.abs()) {
            g = next;
            value = next_value;
            tau = (tau * 2.0).min(1e8);
            grad_norm = projected_gradient_norm(&disc, &g, nl);
        } else {
            tau /= 4.0;
            if tau < 1e-14 {
                return Err(PamError::NotConverged {
                    what: "normalised gradient flow (step collapsed)",
                    iterations,
                    residual: grad_norm,
                });
            }
        }
    }
    Ok(VariationalSolution {
        value,
        minimizer: Profile::new(grid.clone(), g)?,
        iterations,
        gradient_norm: grad_norm,
        grid_meta: GridMeta::of(&grid),
    })
}

fn normalize(g: &mut [f64], w: &[f64]) -> Result<()> {
    let m: f64 = g.iter().zip(w).map(|(x, w)| x * x * w).sum();
    if !(m > 0.0) || !m.is_finite() {
        return Err(PamError::NonFinite { t: 0.0, value: m });
    }
    let s = m.sqrt();
    for x in g.iter_mut() {
        *x /= s;
    }
    Ok(())
}

/// `W`-norm of `½∇F` projected onto the tangent space of the unit sphere.
fn projected_gradient_norm(disc: &Discretization, g: &[f64], nl: Nonlinearity) -> f64 {
    let w = &disc.weights;
    let mut ag = vec![0.0; g.len()];
    disc.apply(g, &mut ag);
    let grad: Vec<f64> = (0..g.len()).map(|i| ag[i] / w[i] - nl.g_dphi(g[i])).collect();
    let mu: f64 = (0..g.len()).filter(|&i| grad[i].is_finite()).map(|i| w[i] * g[i] * grad[i]).sum();
    let mut s = 0.0;
    for i in 0..g.len() {
        let mut r = grad[i] - mu * g[i];
        if g[i] == 0.0 {
            // only growth of g_i is admissible
            r = r.min(0.0);
        }
        if r.is_finite() {
            s += w[i] * r * r;
        }
    }
    s.sqrt()
}

fn symmetric_start(grid: &Grid, rho: f64) -> Profile {
    Profile::from_fn(grid.clone(), |x| (-0.25 * rho * profile::norm_sq(x)).exp())
}

/// `χ(ρ) = inf{‖∇g‖² - ρ∫g² log g² : ‖g‖₂ = 1}` on `grid`.
pub fn chi_numeric(rho: f64, grid: &Grid) -> Result<VariationalSolution> {
    if !(rho > 0.0) {
        return invalid("rho must be positive");
    }
    minimize(&symmetric_start(grid, rho), Nonlinearity::Entropy { rho }, FlowOptions::default())
}

/// `ρ∫ s log s` with `0 log 0 = 0`.
pub fn entropy_functional(gsq: &Profile, rho: f64) -> f64 {
    let w = gsq.grid.discretize().weights;
    rho * gsq.values.iter().zip(&w).map(|(s, w)| if *s > 0.0 { w * s * s.ln() } else { 0.0 }).sum::<f64>()
}

/// `L(ψ) = (ρ/e) ∫ e^{ψ/ρ}`, accumulated in log space.
pub fn legendre_l(psi: &Profile, rho: f64) -> Result<f64> {
    let w = psi.grid.discretize().weights;
    let terms: Vec<f64> = psi.values.iter().zip(&w).map(|(p, w)| w.ln() + p / rho).collect();
    let log_l = (rho / E).ln() + log_sum_exp(&terms);
    let l = log_l.exp();
    if !l.is_finite() {
        return Err(PamError::NonFinite { t: 0.0, value: log_l });
    }
    Ok(l)
}

/// Principal Dirichlet eigenvalue of `Δ + ψ` on the grid of `ψ`.
///
/// Cartesian grids use the lattice eigensolver on `Δ_lattice + h²ψ` and
/// rescale by `h⁻²`; radial grids use the symmetrised finite-volume matrix.
pub fn spectral_lambda(psi: &Profile) -> Result<f64> {
    match psi.grid {
        Grid::Cartesian { h, .. } => {
            let lbox = psi.grid.lattice_box().expect("cartesian");
            let v = LatticeField::new(lbox, psi.values.iter().map(|p| h * h * p).collect())?;
            let dec = eig(&v, EigCount::Top(1), 1e-10)?;
            Ok(dec.eigenvalues[0] / (h * h))
        }
        Grid::Radial { .. } => {
            let disc = psi.grid.discretize();
            let n = psi.len();
            let sw: Vec<f64> = disc.weights.iter().map(|w| w.sqrt()).collect();
            let adiag = disc.diagonal();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                m[(i, i)] = psi.values[i] - adiag[i] / disc.weights[i];
            }
            for &(i, j, c) in &disc.edges {
                let v = c / (sw[i] * sw[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            let ev = m.symmetric_eigenvalues();
            Ok(ev.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// Closed form of `χ̃(ρ)` with a numerical certificate at the minimiser
/// `ψ̃ = ψ_ρ - ρ log ρ` (the shift making `L(ψ̃) = 1`).
#[derive(Debug, Clone, Serialize)]
pub struct ChiTilde {
    pub value: f64,
    /// `L(ψ̃)` on the grid
    pub l_value: f64,
    /// `-λ(ψ̃)` on the grid
    pub minus_lambda: f64,
}

pub fn chi_tilde(rho: f64, grid: &Grid) -> Result<ChiTilde> {
    if !(rho > 0.0) {
        return invalid("rho must be positive");
    }
    let psi = Profile::parabola(grid.clone(), rho).map(|p| p - rho * rho.ln());
    Ok(ChiTilde {
        value: chi_tilde_closed_form(rho, grid.dim()),
        l_value: legendre_l(&psi, rho)?,
        minus_lambda: -spectral_lambda(&psi)?,
    })
}

/// Discrete problem on `[-R, R]^d ⊂ Z^d`:
/// `inf{ Σ_{x~y} (g(x) - g(y))² - δ Σ g² log g² : Σ g² = 1 }` over unordered
/// neighbour pairs (the same as `½Σ` over ordered pairs), zero outside the box.
pub fn chi_discrete(delta: f64, d: usize, radius: usize, tol: f64) -> Result<VariationalSolution> {
    if !(delta >= 0.0) {
        return invalid("delta must be nonnegative");
    }
    let grid = Grid::lattice(d, radius);
    let start = symmetric_start(&grid, delta.clamp(1e-3, 1.0));
    let opts = FlowOptions { tol, ..FlowOptions::default() };
    minimize(&start, Nonlinearity::Entropy { rho: delta }, opts)
}

/// Box radius `max(⌈4/√δ⌉, 4)` used for the discrete problem.
pub fn discrete_radius(delta: f64) -> usize {
    ((4.0 / delta.sqrt()).ceil() as usize).max(4)
}

/// `inf{ ‖∇g‖² + ρ∫(g^{2γ} - g²)/(1-γ) : ‖g‖₂ = 1 }`.
///
/// For `γ = 0` the power term is replaced by `ρ(|supp g| - 1)`; the infimum
/// is then attained on balls (Faber-Krahn), see [`chi_gamma_zero`].
pub fn chi_gamma(rho: f64, gamma: f64, grid: &Grid) -> Result<VariationalSolution> {
    if !(rho > 0.0) || !(0.0..1.0).contains(&gamma) {
        return invalid("chi_gamma needs rho > 0 and gamma in [0, 1)");
    }
    if gamma == 0.0 {
        return chi_gamma_zero(rho, grid);
    }
    minimize(&symmetric_start(grid, rho), Nonlinearity::Power { rho, gamma }, FlowOptions::default())
}

/// Bounded-case functional at `g` (`γ ∈ (0, 1)`).
pub fn gamma_functional(g: &Profile, rho: f64, gamma: f64) -> f64 {
    functional(g, Nonlinearity::Power { rho, gamma })
}

/// First Dirichlet eigenvalue of `-Δ` on the unit ball of `R^d`, `d ≤ 3`.
fn unit_ball_dirichlet(d: usize) -> Result<f64> {
    Ok(match d {
        1 => (PI / 2.0).powi(2),
        2 => 2.404_825_557_695_773f64.powi(2),
        3 => PI * PI,
        _ => return invalid("support-measure problem implemented for d <= 3"),
    })
}

/// `γ = 0`: `inf_R { j²/R² + ρ|B_R| } - ρ` with `j²` the unit-ball Dirichlet
/// eigenvalue; the minimiser is the ball's ground state, computed on a radial
/// grid with the same spacing as `grid`.
pub fn chi_gamma_zero(rho: f64, grid: &Grid) -> Result<VariationalSolution> {
    let d = grid.dim();
    let j2 = unit_ball_dirichlet(d)?;
    let omega = unit_sphere_area(d);
    // d/dR [j²R⁻² + ρωR^d/d] = 0
    let r = (2.0 * j2 / (rho * omega)).powf(1.0 / (d as f64 + 2.0));
    let value = j2 / (r * r) + rho * omega / d as f64 * r.powi(d as i32) - rho;
    let ball = Grid::radial(d, grid.spacing(), r)?;
    let disc = ball.discretize();
    let n = ball.len();
    let sw: Vec<f64> = disc.weights.iter().map(|w| w.sqrt()).collect();
    let adiag = disc.diagonal();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = adiag[i] / disc.weights[i];
    }
    for &(i, j, c) in &disc.edges {
        m[(i, j)] = -c / (sw[i] * sw[j]);
        m[(j, i)] = m[(i, j)];
    }
    let se = m.symmetric_eigen();
    let k = se.eigenvalues.imin();
    let sign = if se.eigenvectors.column(k).sum() < 0.0 { -1.0 } else { 1.0 };
    let values = (0..n).map(|i| sign * se.eigenvectors[(i, k)] / sw[i]).collect();
    Ok(VariationalSolution {
        value,
        minimizer: Profile::new(ball.clone(), values)?,
        iterations: 0,
        gradient_norm: 0.0,
        grid_meta: GridMeta::of(&ball),
    })
}

/// Log-Sobolev deficit `‖∇g‖² - ρ∫g² log g² - χ(ρ)` of `g/‖g‖₂`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogSobolevGap {
    /// deficit clamped at zero
    pub gap: f64,
    pub raw: f64,
    /// raw deficit negative but within [`LSI_NEGATIVE_TOL`]
    pub clamped: bool,
    /// raw deficit below `-LSI_NEGATIVE_TOL`
    pub violated: bool,
}

/// Uses sixth-order differences for `‖∇g‖²`, so the deficit is accurate to
/// quadrature precision on smooth profiles.
pub fn log_sobolev_gap(g: &Profile, rho: f64) -> LogSobolevGap {
    let g = g.normalized_l2();
    let d = g.grid.dim();
    let gsq = g.map(|x| x * x);
    let raw = g.gradient_norm_sq() - entropy_functional(&gsq, rho) - chi_closed_form(rho, d);
    LogSobolevGap {
        gap: raw.max(0.0),
        raw,
        clamped: (-LSI_NEGATIVE_TOL..0.0).contains(&raw),
        violated: raw < -LSI_NEGATIVE_TOL,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DualGap {
    pub l_value: f64,
    pub lambda: f64,
    /// `L(ψ) - λ(ψ) - χ(ρ)`
    pub gap: f64,
    /// `∫ e^{ψ-1} - λ(ψ)`
    pub unit_rho_form: f64,
}

pub fn dual_gap(psi: &Profile, rho: f64) -> Result<DualGap> {
    let l_value = legendre_l(psi, rho)?;
    let lambda = spectral_lambda(psi)?;
    let unit = legendre_l(psi, 1.0)?;
    Ok(DualGap {
        l_value,
        lambda,
        gap: l_value - lambda - chi_closed_form(rho, psi.grid.dim()),
        unit_rho_form: unit - lambda,
    })
}

#[cfg(test)]
mod tests;
