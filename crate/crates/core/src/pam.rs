//! Finite-box solutions of `∂_t v = Δ^d v + ξ v` with zero boundary condition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{eig, semigroup_apply_scaled, EigCount, LatticeBox, LatticeField, ScaledField, SemigroupMethod};
use crate::potential::PotentialModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    /// unit mass at the origin
    Delta0,
    /// `v(0, ·) ≡ 1` on the box
    Flat,
}

#[derive(Debug, Clone)]
pub struct PamSolution {
    /// `v(t, ·)` in scaled form
    pub v: ScaledField,
    /// `log U(t) = log Σ_z v(t, z)`
    pub log_total_mass: f64,
    pub t: f64,
    pub initial: Initial,
}

impl PamSolution {
    pub fn total_mass(&self) -> f64 {
        self.log_total_mass.exp()
    }

    /// `log v(t, z)`.
    pub fn log_value(&self, z: &[i64]) -> Option<f64> {
        let i = self.v.values.lbox.index_of(z)?;
        Some(self.v.log_value(i))
    }
}

/// Solves the parabolic Anderson model on the box of `xi` up to time `t`.
///
/// Sites with `ξ = -∞` are absorbing. For `Initial::Flat` the value at `z`
/// is `u_R^ξ(t, z)`; for `Initial::Delta0` the total mass is `U(t)`, which by
/// symmetry of the generator equals the flat solution at the origin.
pub fn solve_pam(xi: &LatticeField, t: f64, initial: Initial, method: SemigroupMethod) -> Result<PamSolution> {
    let lbox = &xi.lbox;
    let init = match initial {
        Initial::Flat => LatticeField::constant(lbox.clone(), 1.0),
        Initial::Delta0 => {
            let origin = vec![0; lbox.dim()];
            if !lbox.contains(&origin) {
                return invalid("delta initial datum needs the origin inside the box");
            }
            LatticeField::delta(lbox.clone(), &origin)?
        }
    };
    let v = semigroup_apply_scaled(xi, t, &init, method)?;
    Ok(PamSolution { log_total_mass: v.log_sum(), v, t, initial })
}

/// `p_R^V(t, y, z)` on a box, row-major over box indices.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    pub lbox: LatticeBox,
    pub t: f64,
    pub values: Vec<f64>,
}

impl TransitionKernel {
    pub fn get(&self, y: usize, z: usize) -> f64 {
        self.values[y * self.lbox.len() + z]
    }

    pub fn row_sum(&self, y: usize) -> f64 {
        let n = self.lbox.len();
        self.values[y * n..(y + 1) * n].iter().sum()
    }
}

/// Eigenfunction expansion `Σ_k e^{tλ_k} e_k(y) e_k(z)` of the kernel of
/// `e^{t(Δ^d + V)}`; trap rows and columns are zero.
pub fn transition_kernel(v: &LatticeField, t: f64) -> Result<TransitionKernel> {
    if !(t >= 0.0) {
        return invalid("transition kernel needs t >= 0");
    }
    let dec = eig(v, EigCount::All, 1e-8)?;
    let op = dec.operator();
    let n = v.lbox.len();
    let m = op.dim();
    let mut dense = vec![0.0; m * m];
    for (lam, e) in dec.eigenvalues.iter().zip(&dec.eigenvectors) {
        let w = (t * lam).exp();
        for a in 0..m {
            let wa = w * e[a];
            for b in 0..m {
                dense[a * m + b] += wa * e[b];
            }
        }
    }
    let mut values = vec![0.0; n * n];
    let act = op.active_sites();
    for a in 0..m {
        for b in 0..m {
            // enforce exact symmetry and clip round-off below zero
            let s = 0.5 * (dense[a * m + b] + dense[b * m + a]);
            values[act[a] * n + act[b]] = s.max(0.0);
        }
    }
    Ok(TransitionKernel { lbox: v.lbox.clone(), t, values })
}

/// `ξ - H(tα^{-d}) α^d / t`: the potential shifted by the leading growth rate.
pub fn shifted_potential(
    xi: &LatticeField,
    h: &dyn Fn(f64) -> Result<f64>,
    t: f64,
    alpha: f64,
    d: usize,
) -> Result<LatticeField> {
    if !(t > 0.0) || !(alpha > 0.0) {
        return invalid("shifted potential needs t > 0 and alpha > 0");
    }
    let s = t / alpha.powi(d as i32);
    let shift = h(s)? / s;
    Ok(xi.map(|x| x - shift))
}

/// One row of the quenched growth-rate experiment.
#[derive(Debug, Clone, Serialize)]
pub struct QuenchedRow {
    pub t: f64,
    pub rate: f64,
    /// `H(β α(β)^{-d}) α(β)^d / β` at `β = β(t)`
    pub prediction_term1: f64,
    /// `χ̃(ρ)/α(β(t))²`
    pub prediction_term2: f64,
    pub box_radius: usize,
    pub seed: u64,
    /// radius capped below `⌈t log t⌉`
    pub capped: bool,
}

/// Default radius cap of the quenched experiment.
pub fn quenched_radius_cap(d: usize) -> usize {
    if d == 1 {
        2000
    } else {
        60
    }
}

/// `min(⌈t log t⌉, cap)`, at least 1.
pub fn quenched_radius(t: f64, cap: usize) -> (usize, bool) {
    let want = (t * t.ln().max(0.0)).ceil().max(1.0) as usize;
    (want.min(cap), want > cap)
}

/// Quenched rates `(1/t) log U(t)` along a time grid for each seed.
///
/// For a given seed the potential is one fixed realisation of the i.i.d.
/// field (sites are drawn from coordinate-keyed streams, so growing the box
/// only adds sites). `prediction(t)` returns the two terms of the predicted
/// rate; cells run in parallel and rows come back in `(seed, t)` order.
pub fn quenched_rate_series(
    model: &PotentialModel,
    d: usize,
    t_grid: &[f64],
    seeds: &[u64],
    cap: usize,
    prediction: &(dyn Fn(f64) -> Result<(f64, f64)> + Sync),
) -> Result<Vec<QuenchedRow>> {
    model.check_almost_sure("quenched")?;
    if t_grid.iter().any(|t| !(*t > 1.0)) {
        return invalid("quenched experiment needs times t > 1");
    }
    let cells: Vec<(u64, f64)> = seeds.iter().flat_map(|&s| t_grid.iter().map(move |&t| (s, t))).collect();
    cells
        .par_iter()
        .map(|&(seed, t)| {
            let (radius, capped) = quenched_radius(t, cap);
            let lbox = LatticeBox::centered(d, radius);
            let xi = model.sample_field_by_site(&lbox, seed);
            let sol = solve_pam(&xi, t, Initial::Delta0, SemigroupMethod::Ode)?;
            let (p1, p2) = prediction(t)?;
            Ok(QuenchedRow {
                t,
                rate: sol.log_total_mass / t,
                prediction_term1: p1,
                prediction_term2: p2,
                box_radius: radius,
                seed,
                capped,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::catalog_model;
    use nalgebra::DMatrix;

    fn field(b: &LatticeBox, seed: f64) -> LatticeField {
        let vals =
            (0..b.len()).map(|i| 4.0 * (((i as f64 + seed) * 78.233).sin() * 43758.5453).fract().abs() - 2.0).collect();
        LatticeField::new(b.clone(), vals).unwrap()
    }

    #[test]
    fn delta_at_time_zero_has_unit_mass() {
        let b = LatticeBox::centered(2, 3);
        let s = solve_pam(&field(&b, 1.0), 0.0, Initial::Delta0, SemigroupMethod::Ode).unwrap();
        assert_eq!(s.total_mass(), 1.0);
    }

    #[test]
    fn single_site_mass() {
        for d in 1..=2 {
            let b = LatticeBox::centered(d, 0);
            let xi = LatticeField::constant(b, 0.4);
            for m in [SemigroupMethod::Eigen, SemigroupMethod::Ode] {
                let s = solve_pam(&xi, 1.5, Initial::Delta0, m).unwrap();
                let exact = (0.4 - 2.0 * d as f64) * 1.5;
                assert!((s.log_total_mass - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_potential_factorizes_flat_solution() {
        let b = LatticeBox::centered(1, 3);
        let a = solve_pam(&LatticeField::constant(b.clone(), 0.0), 2.0, Initial::Flat, SemigroupMethod::Ode).unwrap();
        let c = solve_pam(&LatticeField::constant(b, -0.7), 2.0, Initial::Flat, SemigroupMethod::Ode).unwrap();
        let (fa, fc) = (a.v.to_field().unwrap(), c.v.to_field().unwrap());
        for (x, y) in fa.values.iter().zip(&fc.values) {
            assert!((y - (-1.4f64).exp() * x).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_mass_bounded_for_nonpositive_potential() {
        let b = LatticeBox::centered(1, 6);
        let xi = field(&b, 2.0).map(|x| -x.abs());
        let s = solve_pam(&xi, 3.0, Initial::Delta0, SemigroupMethod::Ode).unwrap();
        assert!(s.total_mass() <= 1.0);
    }

    #[test]
    fn kernel_row_sums_match_flat_solution() {
        let b = LatticeBox::centered(2, 2);
        let v = field(&b, 5.0);
        let k = transition_kernel(&v, 0.8).unwrap();
        let u = solve_pam(&v, 0.8, Initial::Flat, SemigroupMethod::Eigen).unwrap().v.to_field().unwrap();
        for y in 0..b.len() {
            assert!((k.row_sum(y) - u.values[y]).abs() < 1e-10);
            for z in 0..b.len() {
                assert!(k.get(y, z) >= 0.0);
                assert!((k.get(y, z) - k.get(z, y)).abs() < 1e-14);
            }
        }
        let id = transition_kernel(&v, 0.0).unwrap();
        for y in 0..b.len() {
            for z in 0..b.len() {
                let target = if y == z { 1.0 } else { 0.0 };
                assert!((id.get(y, z) - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_matches_dense_matrix_exponential() {
        // independent oracle: Taylor series of the 3x3 tridiagonal generator
        let b = LatticeBox::centered(1, 1);
        let k = transition_kernel(&LatticeField::constant(b, 0.0), 1.0).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0]);
        let mut term = DMatrix::<f64>::identity(3, 3);
        let mut sum = term.clone();
        for n in 1..60 {
            term = &term * &a / n as f64;
            sum += &term;
        }
        for y in 0..3 {
            for z in 0..3 {
                assert!((k.get(y, z) - sum[(y, z)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn shifted_potential_examples() {
        let b = LatticeBox::centered(1, 2);
        let xi = field(&b, 3.0);
        let zero = |_: f64| Ok(0.0);
        assert_eq!(shifted_potential(&xi, &zero, 5.0, 1.0, 1).unwrap().values, xi.values);
        let m = catalog_model("double-exponential").unwrap();
        let h = |t: f64| m.cumulant_h(t);
        let c = LatticeField::constant(b, 2.0);
        let s = shifted_potential(&c, &h, 10.0, 1.0, 1).unwrap();
        assert!((2.0 - s.values[0] - 1.5104412573075515).abs() < 1e-8);
    }

    #[test]
    fn monotone_in_potential_and_box() {
        let b = LatticeBox::centered(1, 5);
        let lo = field(&b, 7.0);
        let hi = lo.map(|x| x + 0.3 * (x * 3.0).sin().abs());
        let a = solve_pam(&lo, 1.2, Initial::Flat, SemigroupMethod::Ode).unwrap().v.to_field().unwrap();
        let c = solve_pam(&hi, 1.2, Initial::Flat, SemigroupMethod::Ode).unwrap().v.to_field().unwrap();
        for (x, y) in a.values.iter().zip(&c.values) {
            assert!(x <= &(y + 1e-12));
        }
        let small = LatticeBox::centered(1, 3);
        let sub = LatticeField::new(small.clone(), small.sites().map(|z| lo.get(&z).unwrap()).collect()).unwrap();
        let us = solve_pam(&sub, 1.2, Initial::Flat, SemigroupMethod::Ode).unwrap();
        let ub = solve_pam(&lo, 1.2, Initial::Flat, SemigroupMethod::Ode).unwrap();
        for z in small.sites() {
            assert!(us.log_value(&z).unwrap() <= ub.log_value(&z).unwrap() + 1e-12);
        }
    }

    #[test]
    fn quenched_zero_and_constant_potential() {
        let zero = PotentialModel::constant(0.0).unwrap();
        let pred = |_t: f64| Ok((0.0, 0.0));
        let rows = quenched_rate_series(&zero, 1, &[2.0, 5.0, 10.0], &[1], 2000, &pred).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for r in &rows {
            assert!(r.rate <= 0.0 && r.rate >= -2.0);
            assert!(r.rate >= prev - 1e-12);
            prev = r.rate;
        }
        let c = PotentialModel::constant(0.5).unwrap();
        let rc = quenched_rate_series(&c, 1, &[10.0], &[1], 2000, &pred).unwrap();
        assert!((rc[0].rate - 0.5 - rows[2].rate).abs() < 1e-10);
    }
}
