//! Functions on uniform grids: Cartesian cubes and radial shells.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::experiments::fmt_f64;
use crate::lattice::LatticeBox;

/// Node layout of a [`Profile`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grid {
    /// Nodes `z h` for `z ∈ [-radius, radius]^d`, zero beyond the cube.
    Cartesian { d: usize, h: f64, radius: usize },
    /// Radially symmetric functions on `R^d`: nodes `r_i = (i + 1/2) h` for
    /// `i < n`, zero at `r = (n + 1/2) h`.
    Radial { d: usize, h: f64, n: usize },
}

/// Weighted graph form of the Dirichlet energy on a grid:
/// `E(g) = Σ_edges c (g_i - g_j)^2 + Σ_i b_i g_i^2`, `∫ f ≈ Σ_i w_i f_i`.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub weights: Vec<f64>,
    pub edges: Vec<(usize, usize, f64)>,
    pub boundary: Vec<f64>,
    /// nodes form a chain `i ~ i + 1` (tridiagonal operator)
    pub chain: bool,
}

impl Discretization {
    /// `A g` for the energy matrix, `E(g) = g·A g`.
    pub fn apply(&self, g: &[f64], out: &mut [f64]) {
        for (o, (b, x)) in out.iter_mut().zip(self.boundary.iter().zip(g)) {
            *o = b * x;
        }
        for &(i, j, c) in &self.edges {
            let f = c * (g[i] - g[j]);
            out[i] += f;
            out[j] -= f;
        }
    }

    pub fn energy(&self, g: &[f64]) -> f64 {
        let mut e: f64 = self.boundary.iter().zip(g).map(|(b, x)| b * x * x).sum();
        for &(i, j, c) in &self.edges {
            e += c * (g[i] - g[j]).powi(2);
        }
        e
    }

    /// Diagonal of `A`.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut diag = self.boundary.clone();
        for &(i, j, c) in &self.edges {
            diag[i] += c;
            diag[j] += c;
        }
        diag
    }
}

/// Surface area of the unit sphere in `R^d` (2 for `d = 1`).
pub fn unit_sphere_area(d: usize) -> f64 {
    // Γ(d/2) by recursion from Γ(1/2) or Γ(1)
    let mut gamma = if d.is_multiple_of(2) { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if d.is_multiple_of(2) { 1.0 } else { 0.5 };
    while x + 0.25 < d as f64 / 2.0 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma
}

impl Grid {
    /// Cube `[-L, L]^d` with spacing `h` (the radius is rounded up).
    pub fn cartesian(d: usize, h: f64, half_width: f64) -> Result<Self> {
        if d == 0 || !(h > 0.0) || !(half_width > 0.0) {
            return invalid("grid needs d >= 1, h > 0 and L > 0");
        }
        Ok(Grid::Cartesian { d, h, radius: (half_width / h - 1e-9).ceil() as usize })
    }

    /// Radial grid on `[0, L]`.
    pub fn radial(d: usize, h: f64, half_width: f64) -> Result<Self> {
        if d == 0 || !(h > 0.0) || !(half_width > 0.0) {
            return invalid("grid needs d >= 1, h > 0 and L > 0");
        }
        Ok(Grid::Radial { d, h, n: ((half_width / h - 1e-9).ceil() as usize).max(1) })
    }

    /// The integer lattice `[-R, R]^d` (unit spacing).
    pub fn lattice(d: usize, radius: usize) -> Self {
        Grid::Cartesian { d, h: 1.0, radius }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Grid::Cartesian { d, .. } | Grid::Radial { d, .. } => d,
        }
    }

    pub fn spacing(&self) -> f64 {
        match *self {
            Grid::Cartesian { h, .. } | Grid::Radial { h, .. } => h,
        }
    }

    /// Distance from the origin to the first zero-boundary node.
    pub fn half_width(&self) -> f64 {
        match *self {
            Grid::Cartesian { h, radius, .. } => (radius + 1) as f64 * h,
            Grid::Radial { h, n, .. } => (n as f64 + 0.5) * h,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Cartesian { .. } => self.lattice_box().expect("cartesian").len(),
            Grid::Radial { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lattice_box(&self) -> Option<LatticeBox> {
        match *self {
            Grid::Cartesian { d, radius, .. } => Some(LatticeBox::centered(d, radius)),
            Grid::Radial { .. } => None,
        }
    }

    /// Coordinates of node `i` (`[r_i]` on radial grids).
    pub fn position(&self, i: usize) -> Vec<f64> {
        match *self {
            Grid::Cartesian { d, h, radius } => {
                LatticeBox::centered(d, radius).site(i).into_iter().map(|z| z as f64 * h).collect()
            }
            Grid::Radial { h, .. } => vec![(i as f64 + 0.5) * h],
        }
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    pub fn discretize(&self) -> Discretization {
        match *self {
            Grid::Cartesian { d, h, radius } => {
                let lbox = LatticeBox::centered(d, radius);
                let n = lbox.len();
                let c = h.powi(d as i32 - 2);
                let mut edges = Vec::with_capacity(n * d);
                let mut boundary = vec![0.0; n];
                let mut nb = Vec::new();
                for (i, b) in boundary.iter_mut().enumerate() {
                    let outside = lbox.neighbors(i, &mut nb);
                    *b = c * outside as f64;
                    edges.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j, c)));
                }
                Discretization { weights: vec![h.powi(d as i32); n], edges, boundary, chain: d == 1 }
            }
            Grid::Radial { d, h, n } => {
                let omega = unit_sphere_area(d);
                let df = d as i32;
                let weights = (0..n)
                    .map(|i| omega / d as f64 * h.powi(df) * (((i + 1) as f64).powi(df) - (i as f64).powi(df)))
                    .collect();
                // flux through the face at r = (i + 1) h
                let face = |i: usize| omega * ((i + 1) as f64 * h).powi(df - 1) / h;
                let edges = (0..n.saturating_sub(1)).map(|i| (i, i + 1, face(i))).collect();
                let mut boundary = vec![0.0; n];
                boundary[n - 1] = face(n - 1);
                Discretization { weights, edges, boundary, chain: true }
            }
        }
    }
}

/// A real function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("profile has {} values for {} nodes", values.len(), grid.len()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.position(i))).collect();
        Self { grid, values }
    }

    /// `g_ρ(x) = (ρ/π)^{d/4} e^{-ρ|x|²/2}`.
    pub fn gaussian(grid: Grid, rho: f64) -> Self {
        let d = grid.dim() as f64;
        let c = (rho / std::f64::consts::PI).powf(d / 4.0);
        Self::from_fn(grid, |x| c * (-0.5 * rho * norm_sq(x)).exp())
    }

    /// `ψ_ρ(x) = ρ + ρ(d/2) log(ρ/π) - ρ²|x|²`.
    pub fn parabola(grid: Grid, rho: f64) -> Self {
        let d = grid.dim() as f64;
        let c = rho + rho * d / 2.0 * (rho / std::f64::consts::PI).ln();
        Self::from_fn(grid, |x| c - rho * rho * norm_sq(x))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&x| f(x)).collect() }
    }

    /// `∫ f`.
    pub fn integral(&self) -> f64 {
        let w = self.grid.discretize().weights;
        self.values.iter().zip(&w).map(|(v, w)| v * w).sum()
    }

    /// `∫ f²`.
    pub fn l2_norm_sq(&self) -> f64 {
        let w = self.grid.discretize().weights;
        self.values.iter().zip(&w).map(|(v, w)| v * v * w).sum()
    }

    /// `(∫ |f|^q)^{1/q}`.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let w = self.grid.discretize().weights;
        let s: f64 = self.values.iter().zip(&w).map(|(v, w)| v.abs().powf(q) * w).sum();
        s.powf(1.0 / q)
    }

    pub fn normalized_l2(&self) -> Self {
        let n = self.l2_norm_sq().sqrt();
        self.map(|x| x / n)
    }

    /// `‖∇f‖²` from the second-order finite-volume stencil.
    pub fn dirichlet_energy(&self) -> f64 {
        self.grid.discretize().energy(&self.values)
    }

    /// `‖∇f‖²` with sixth-order central differences on Cartesian grids
    /// (zero extension beyond the cube); radial grids use the
    /// finite-volume energy.
    pub fn gradient_norm_sq(&self) -> f64 {
        let Grid::Cartesian { d, h, radius } = self.grid else {
            return self.dirichlet_energy();
        };
        const C: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
        let lbox = LatticeBox::centered(d, radius);
        let side = lbox.side() as i64;
        let mut total = 0.0;
        let mut stride = 1i64;
        for _ in 0..d {
            let mut sum = 0.0;
            for start in 0..lbox.len() as i64 {
                if (start / stride) % side != 0 {
                    continue;
                }
                // one line along this axis
                let line: Vec<f64> = (0..side).map(|k| self.values[(start + k * stride) as usize]).collect();
                // the stencil runs 3 nodes past each end into the zero tail
                let at = |k: i64| if k < 0 || k >= side { 0.0 } else { line[k as usize] };
                for k in -3..side + 3 {
                    let mut der = 0.0;
                    for (m, c) in C.iter().enumerate() {
                        let m = m as i64 + 1;
                        der += c * (at(k + m) - at(k - m));
                    }
                    sum += (der / h).powi(2);
                }
            }
            total += sum * h.powi(d as i32);
            stride *= side;
        }
        total
    }

    /// `∫ x f²` on Cartesian grids; zero for radial profiles.
    pub fn barycenter(&self) -> Vec<f64> {
        let d = self.grid.dim();
        if matches!(self.grid, Grid::Radial { .. }) {
            return vec![0.0; d];
        }
        let mut b = vec![0.0; d];
        let mut mass = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.grid.position(i);
            mass += v * v;
            for k in 0..d {
                b[k] += x[k] * v * v;
            }
        }
        b.iter().map(|x| x / mass).collect()
    }

    pub fn sup_distance(&self, other: &Profile) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `x_1,..,x_d,value` (or `r,value`) rows.
    pub fn to_csv(&self) -> String {
        let mut s = match self.grid {
            Grid::Cartesian { d, .. } => {
                let cols: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
                format!("{},value\n", cols.join(","))
            }
            Grid::Radial { .. } => "r,value\n".to_string(),
        };
        for (i, v) in self.values.iter().enumerate() {
            for x in self.grid.position(i) {
                s.push_str(&fmt_f64(x));
                s.push(',');
            }
            s.push_str(&fmt_f64(*v));
            s.push('\n');
        }
        s
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(1) - 2.0).abs() < 1e-15);
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn radial_weights_are_shell_volumes() {
        let g = Grid::radial(3, 0.1, 2.0).unwrap();
        let total: f64 = g.discretize().weights.iter().sum();
        assert!((total - 4.0 / 3.0 * PI * 8.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_unit_norm_and_energy() {
        for (grid, rho) in [
            (Grid::cartesian(1, 0.025, 5.0).unwrap(), 1.0),
            (Grid::cartesian(2, 0.05, 5.0).unwrap(), 1.0),
            (Grid::radial(2, 0.025 / PI.sqrt(), 5.0 / PI.sqrt()).unwrap(), PI),
            (Grid::radial(1, 0.025, 5.0).unwrap(), 1.0),
        ] {
            let d = grid.dim() as f64;
            let g = Profile::gaussian(grid, rho);
            assert!((g.l2_norm_sq() - 1.0).abs() < 1e-4, "{}", g.l2_norm_sq());
            // ‖∇g_ρ‖² = ρd/2
            assert!(
                (g.dirichlet_energy() - rho * d / 2.0).abs() < 2e-3 * rho,
                "{} {}",
                g.dirichlet_energy(),
                rho * d / 2.0
            );
        }
    }

    #[test]
    fn high_order_gradient_is_accurate() {
        let g = Profile::gaussian(Grid::cartesian(1, 0.025, 6.0).unwrap(), 1.0);
        assert!((g.gradient_norm_sq() - 0.5).abs() < 1e-10);
        let g2 = Profile::gaussian(Grid::cartesian(2, 0.05, 6.0).unwrap(), 2.0);
        assert!((g2.gradient_norm_sq() - 2.0).abs() < 1e-7, "{}", g2.gradient_norm_sq());
    }

    #[test]
    fn discretization_energy_matches_operator() {
        for grid in [Grid::cartesian(2, 0.5, 2.0).unwrap(), Grid::radial(3, 0.2, 2.0).unwrap()] {
            let disc = grid.discretize();
            let g: Vec<f64> = (0..grid.len()).map(|i| ((i * 7 % 11) as f64).sin()).collect();
            let mut ag = vec![0.0; g.len()];
            disc.apply(&g, &mut ag);
            let quad: f64 = g.iter().zip(&ag).map(|(a, b)| a * b).sum();
            assert!((quad - disc.energy(&g)).abs() < 1e-10 * quad.abs());
        }
    }

    #[test]
    fn lq_of_uniform_profile() {
        let grid = Grid::cartesian(1, 1.0, 3.0).unwrap();
        let p = Profile::from_fn(grid, |_| 2.0);
        assert!((p.lq_norm(2.0) - (4.0f64 * 7.0).sqrt()).abs() < 1e-12);
    }
}
