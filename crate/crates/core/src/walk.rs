//! Continuous-time simple random walk, local times and the annealed
//! Feynman-Kac estimators.
//!
//! Averaging `exp ∫ξ(X_s) ds` over the i.i.d. field gives
//! `⟨u_R(t, 0)⟩ = E_0[exp Σ_x H(ℓ_t(x)) · 1{supp ℓ_t ⊆ B_R}]`, so the
//! potential can be integrated out exactly once `H` is known.

use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, PamError, Result};
use crate::lattice::{eig, EigCount, LatticeBox, LatticeField, SemigroupMethod};
use crate::numerics::stats::{pairwise_sum, LogMeanEstimate};
use crate::pam::{solve_pam, Initial};
use crate::potential::PotentialModel;
use crate::seed::{derive_seed, Rng};
use crate::variational::{Grid, Profile};

/// Effective sample sizes below this flag an estimate.
pub const MIN_ESS: f64 = 100.0;
/// Escape-mass bound for the self-intersection truncation.
pub const ESCAPE_TOL: f64 = 1e-8;

/// Occupation times `ℓ_t(x)` of one path, sorted by site.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTimes {
    pub t: f64,
    pub d: usize,
    /// flattened site coordinates, `d` per site
    sites: Vec<i64>,
    times: Vec<f64>,
    jumps: usize,
}

impl LocalTimes {
    /// Aggregates `(site, holding time)` visits in path order.
    fn from_visits(t: f64, d: usize, mut visits: Vec<(Vec<i64>, f64)>, jumps: usize) -> Self {
        // stable sort keeps time order within a site, so sums are reproducible
        visits.sort_by(|a, b| a.0.cmp(&b.0));
        let mut sites = Vec::new();
        let mut times: Vec<f64> = Vec::new();
        let mut last: Option<Vec<i64>> = None;
        for (z, dt) in visits {
            if last.as_ref() == Some(&z) {
                *times.last_mut().expect("nonempty") += dt;
            } else {
                sites.extend_from_slice(&z);
                times.push(dt);
                last = Some(z);
            }
        }
        Self { t, d, sites, times, jumps }
    }

    /// Number of visited sites.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn site(&self, k: usize) -> &[i64] {
        &self.sites[k * self.d..(k + 1) * self.d]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn jumps(&self) -> usize {
        self.jumps
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.times)
    }

    /// `max_x |x|_∞` over visited sites.
    pub fn range(&self) -> usize {
        self.sites.iter().map(|z| z.unsigned_abs() as usize).max().unwrap_or(0)
    }

    /// `supp ℓ_t ⊆ B_R`.
    pub fn confined_to(&self, radius: usize) -> bool {
        self.range() <= radius
    }

    pub fn sum_of_squares(&self) -> f64 {
        let sq: Vec<f64> = self.times.iter().map(|x| x * x).collect();
        pairwise_sum(&sq)
    }

    /// Pointwise sum of several paths' local times.
    pub fn superpose(paths: &[LocalTimes]) -> Result<Self> {
        let Some(first) = paths.first() else {
            return invalid("superposition needs at least one path");
        };
        let d = first.d;
        let mut visits = Vec::new();
        for p in paths {
            if p.d != d {
                return invalid("paths of different dimensions");
            }
            for k in 0..p.len() {
                visits.push((p.site(k).to_vec(), p.time(k)));
            }
        }
        let t = paths.iter().map(|p| p.t).sum();
        let jumps = paths.iter().map(|p| p.jumps).sum();
        Ok(Self::from_visits(t, d, visits, jumps))
    }

    /// Support is nearest-neighbour connected and contains the origin.
    pub fn support_is_connected(&self) -> bool {
        let n = self.len();
        let origin = vec![0i64; self.d];
        let Some(start) = (0..n).find(|&k| self.site(k) == origin.as_slice()) else {
            return false;
        };
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s {
                    let dist: i64 = self.site(k).iter().zip(self.site(j)).map(|(a, b)| (a - b).abs()).sum();
                    if dist == 1 {
                        *s = true;
                        stack.push(j);
                    }
                }
            }
        }
        seen.iter().all(|s| *s)
    }
}

/// Uniform variate in `(0, 1)`.
fn open_uniform(rng: &mut Rng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Walk with `Exp(2d)` holding times and uniform neighbour choice, started
/// at the origin, observed up to time `t`.
pub fn simulate_walk_with(t: f64, d: usize, rng: &mut Rng) -> LocalTimes {
    let rate = 2.0 * d as f64;
    let mut pos = vec![0i64; d];
    let mut clock = 0.0;
    let mut visits = Vec::new();
    let mut jumps = 0;
    loop {
        let hold = -open_uniform(rng).ln() / rate;
        if clock + hold >= t {
            visits.push((pos.clone(), t - clock));
            break;
        }
        visits.push((pos.clone(), hold));
        clock += hold;
        let dir = rng.random_range(0..2 * d);
        pos[dir / 2] += if dir % 2 == 0 { 1 } else { -1 };
        jumps += 1;
    }
    LocalTimes::from_visits(t, d, visits, jumps)
}

pub fn simulate_walk(t: f64, d: usize, seed: u64) -> Result<LocalTimes> {
    if !(t >= 0.0) || !t.is_finite() || d == 0 {
        return invalid("walk needs finite t >= 0 and d >= 1");
    }
    Ok(simulate_walk_with(t, d, &mut Rng::seed_from_u64(seed)))
}

/// `(Σ_x ℓ(x)^q)^{1/q}`; `q = 1` gives `t`.
pub fn lq_norm(lt: &LocalTimes, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return invalid("q-norm needs q >= 1");
    }
    if q == 1.0 {
        return Ok(lt.total());
    }
    let terms: Vec<f64> = lt.times.iter().map(|x| x.powf(q)).collect();
    Ok(pairwise_sum(&terms).powf(1.0 / q))
}

/// `L_t(x) = (α^d/t) ℓ_t(⌊xα⌋)` as a step function: a Cartesian profile with
/// spacing `1/α` whose node `z/α` carries the value on the cell of `z`.
pub fn rescaled_local_times(lt: &LocalTimes, alpha: f64) -> Result<Profile> {
    if !(alpha > 0.0) || !(lt.t > 0.0) {
        return invalid("rescaling needs alpha > 0 and t > 0");
    }
    let radius = lt.range();
    let grid = Grid::Cartesian { d: lt.d, h: 1.0 / alpha, radius };
    let lbox = LatticeBox::centered(lt.d, radius);
    let scale = alpha.powi(lt.d as i32) / lt.t;
    let mut values = vec![0.0; lbox.len()];
    for k in 0..lt.len() {
        let i = lbox.index_of(lt.site(k)).expect("inside range box");
        values[i] = scale * lt.time(k);
    }
    Profile::new(grid, values)
}

/// `H` tabulated on `[0, t_max]` with cubic interpolation, refined until the
/// midpoint error is below `1e-10 (1 + |H|)`.
pub struct CumulantTable {
    step: f64,
    values: Vec<f64>,
    t_max: f64,
}

impl CumulantTable {
    pub fn new(model: &PotentialModel, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0) {
            return invalid("table needs t_max > 0");
        }
        let mut n = 256;
        let mut values = tabulate(model, t_max, n)?;
        loop {
            let step = t_max / n as f64;
            let table = Self { step, values, t_max };
            let mids: Vec<f64> =
                (0..n).into_par_iter().map(|k| model.cumulant_h((k as f64 + 0.5) * step)).collect::<Result<_>>()?;
            let worst = mids
                .iter()
                .enumerate()
                .map(|(k, h)| (table.eval((k as f64 + 0.5) * step) - h).abs() / (1.0 + h.abs()))
                .fold(0.0, f64::max);
            if worst < 1e-10 {
                return Ok(table);
            }
            if n >= 1 << 16 {
                return Err(PamError::NotConverged { what: "cumulant table", iterations: n, residual: worst });
            }
            // old nodes become the even nodes of the refined table
            let old = table.values;
            let mut refined = Vec::with_capacity(2 * n + 1);
            for k in 0..n {
                refined.push(old[k]);
                refined.push(mids[k]);
            }
            refined.push(old[n]);
            values = refined;
            n *= 2;
        }
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Four-point Lagrange interpolation; nodes are exact.
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.values.len() - 1;
        let x = (s / self.step).clamp(0.0, n as f64);
        let k = x.floor() as usize;
        if (x - k as f64) == 0.0 {
            return self.values[k];
        }
        let base = k.saturating_sub(1).min(n.saturating_sub(3));
        let u = x - base as f64;
        let y = &self.values[base..base + 4];
        let l0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
        let l1 = u * (u - 2.0) * (u - 3.0) / 2.0;
        let l2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
        let l3 = u * (u - 1.0) * (u - 2.0) / 6.0;
        l0 * y[0] + l1 * y[1] + l2 * y[2] + l3 * y[3]
    }
}

fn tabulate(model: &PotentialModel, t_max: f64, n: usize) -> Result<Vec<f64>> {
    (0..=n)
        .into_par_iter()
        .map(|k| if k == n { model.cumulant_h(t_max) } else { model.cumulant_h(t_max * k as f64 / n as f64) })
        .collect()
}

fn check_mc_args(t: f64, n: usize) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid("time must be finite and >= 0");
    }
    if n == 0 {
        return invalid("need at least one replica");
    }
    Ok(())
}

/// Replica average of `exp Σ_x H(ℓ_t(x)) · 1{supp ℓ_t ⊆ B_R}`.
pub fn annealed_mass_walk(
    model: &PotentialModel,
    t: f64,
    radius: usize,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<LogMeanEstimate> {
    moment_walk(model, 1, t, radius, d, n, seed)
}

/// `⟨u_R(t, 0)^p⟩` from `p` independent walks per replica.
fn moment_walk(
    model: &PotentialModel,
    p: usize,
    t: f64,
    radius: usize,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<LogMeanEstimate> {
    check_mc_args(t, n)?;
    if t == 0.0 {
        return Ok(LogMeanEstimate::from_log_weights(&vec![0.0; n]));
    }
    let table = CumulantTable::new(model, p as f64 * t)?;
    let weights: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = Rng::seed_from_u64(derive_seed(seed, i));
            let paths: Vec<LocalTimes> = (0..p).map(|_| simulate_walk_with(t, d, &mut rng)).collect();
            if paths.iter().any(|lt| !lt.confined_to(radius)) {
                return f64::NEG_INFINITY;
            }
            let joint = if p == 1 {
                paths.into_iter().next().expect("one path")
            } else {
                LocalTimes::superpose(&paths).expect("same dimension")
            };
            let h: Vec<f64> = joint.times().iter().map(|&s| table.eval(s)).collect();
            pairwise_sum(&h)
        })
        .collect();
    Ok(LogMeanEstimate::from_log_weights(&weights))
}

/// `log u_R^ξ(t, 0)` for the `i`-th potential draw.
fn log_solution_at_origin(model: &PotentialModel, lbox: &LatticeBox, t: f64, seed: u64, i: u64) -> Result<f64> {
    let xi: LatticeField = model.sample_field(lbox, derive_seed(seed, i));
    let sol = solve_pam(&xi, t, Initial::Flat, SemigroupMethod::Eigen)?;
    Ok(sol.log_value(&vec![0; lbox.dim()]).expect("origin in box"))
}

/// Average of the exact box solution `u_R^ξ(t, 0)` over `n` potential draws.
pub fn annealed_mass_potential(
    model: &PotentialModel,
    t: f64,
    radius: usize,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<LogMeanEstimate> {
    potential_moment(model, 1.0, t, radius, d, n, seed)
}

fn potential_moment(
    model: &PotentialModel,
    p: f64,
    t: f64,
    radius: usize,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<LogMeanEstimate> {
    check_mc_args(t, n)?;
    let lbox = LatticeBox::centered(d, radius);
    let logs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| log_solution_at_origin(model, &lbox, t, seed, i).map(|l| p * l))
        .collect::<Result<_>>()?;
    Ok(LogMeanEstimate::from_log_weights(&logs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    /// `p` independent walks with the field integrated out
    Walks,
    /// exact solves over potential draws
    PotentialMc,
}

/// Estimate of `log⟨u_R(t, 0)^p⟩`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MomentEstimate {
    pub p: f64,
    pub t: f64,
    pub radius: usize,
    pub method: MomentMethod,
    pub estimate: LogMeanEstimate,
    /// effective sample size below [`MIN_ESS`]
    pub flagged: bool,
}

impl MomentEstimate {
    pub fn log_moment(&self) -> f64 {
        self.estimate.log_mean
    }

    /// `(1/pt) log⟨U^p⟩`.
    pub fn rate(&self) -> f64 {
        self.estimate.log_mean / (self.p * self.t)
    }

    /// Standard error of [`Self::rate`].
    pub fn rate_se(&self) -> f64 {
        self.estimate.log_se / (self.p * self.t)
    }

    /// `α(pt)² [leading - rate]`.
    pub fn centered(&self, alpha_pt: f64, leading: f64) -> f64 {
        alpha_pt * alpha_pt * (leading - self.rate())
    }
}

/// `⟨u_R(t, 0)^p⟩`: integer `p` through `p` independent walks (Fubini over
/// the field), other `p` through potential Monte Carlo with exact solves.
pub fn moment_estimator(
    model: &PotentialModel,
    p: f64,
    t: f64,
    radius: usize,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if !(p > 0.0) {
        return invalid("moment order must be positive");
    }
    let (method, estimate) = if p.fract() == 0.0 && p <= 64.0 {
        (MomentMethod::Walks, moment_walk(model, p as usize, t, radius, d, n, seed)?)
    } else {
        (MomentMethod::PotentialMc, potential_moment(model, p, t, radius, d, n, seed)?)
    };
    Ok(MomentEstimate { p, t, radius, method, flagged: estimate.ess < MIN_ESS, estimate })
}

/// `E Σ_x ℓ_t(x)² = 2∫_0^t (t - r) p_r(0, 0) dr` from the spectral expansion
/// of the free walk on `truncation`; errors when the walk escapes the box by
/// time `t` with probability above [`ESCAPE_TOL`].
pub fn self_intersection_second_moment(t: f64, truncation: &LatticeBox) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid("time must be finite and >= 0");
    }
    let origin = vec![0i64; truncation.dim()];
    let Some(o) = truncation.index_of(&origin) else {
        return invalid("truncation box must contain the origin");
    };
    let free = LatticeField::constant(truncation.clone(), 0.0);
    let dec = eig(&free, EigCount::All, 1e-10)?;
    let mut total = 0.0;
    let mut survival = 0.0;
    for (lam, e) in dec.eigenvalues.iter().zip(&dec.eigenvectors) {
        let a = e[o] * e[o];
        // ∫_0^t (t - r) e^{λr} dr
        let x = lam * t;
        let kernel =
            if x.abs() < 1e-4 { t * t * (0.5 + x / 6.0 + x * x / 24.0) } else { (x.exp_m1() - x) / (lam * lam) };
        total += a * kernel;
        survival += (lam * t).exp() * e[o] * e.iter().sum::<f64>();
    }
    let escape = 1.0 - survival;
    if escape > ESCAPE_TOL {
        return Err(PamError::MarginTooSmall { mass: escape, threshold: ESCAPE_TOL });
    }
    Ok(2.0 * total)
}

/// Smallest centred box keeping the escape mass below [`ESCAPE_TOL`].
pub fn self_intersection_auto(t: f64, d: usize) -> Result<(f64, LatticeBox)> {
    let mut radius = ((4.0 * (2.0 * t).sqrt()).ceil() as usize).max(4);
    loop {
        let lbox = LatticeBox::centered(d, radius);
        match self_intersection_second_moment(t, &lbox) {
            Ok(v) => return Ok((v, lbox)),
            Err(PamError::MarginTooSmall { .. }) => radius = radius * 3 / 2 + 1,
            Err(e) => return Err(e),
        }
    }
}

/// Monte Carlo mean and standard error of `f(ℓ_t)` over `n` walks.
pub fn walk_statistic(
    t: f64,
    d: usize,
    n: usize,
    seed: u64,
    f: impl Fn(&LocalTimes) -> f64 + Sync,
) -> Result<(f64, f64)> {
    check_mc_args(t, n)?;
    let xs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| f(&simulate_walk_with(t, d, &mut Rng::seed_from_u64(derive_seed(seed, i)))))
        .collect();
    Ok(crate::numerics::stats::mean_se(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::catalog_model;

    #[test]
    fn zero_time_walk() {
        let lt = simulate_walk(0.0, 2, 1).unwrap();
        assert_eq!(lt.len(), 1);
        assert_eq!(lt.site(0), &[0, 0]);
        assert_eq!(lt.time(0), 0.0);
    }

    #[test]
    fn occupation_sums_to_t_and_support_is_connected() {
        for seed in 0..200 {
            for d in 1..=3 {
                let t = 0.37 * (seed % 13) as f64 + 0.01;
                let lt = simulate_walk(t, d, seed).unwrap();
                assert!((lt.total() - t).abs() <= 1e-12 * t);
                assert!(lt.support_is_connected());
            }
        }
        assert_eq!(simulate_walk(3.0, 2, 9).unwrap(), simulate_walk(3.0, 2, 9).unwrap());
    }

    #[test]
    fn jump_count_is_poisson() {
        let (mean, se) = walk_statistic(1.0, 1, 10_000, 5, |lt| lt.jumps() as f64).unwrap();
        assert!((mean - 2.0).abs() < 3.0 * se, "{mean} {se}");
    }

    #[test]
    fn lq_examples() {
        let lt = simulate_walk(2.5, 1, 77).unwrap();
        assert!((lq_norm(&lt, 1.0).unwrap() - 2.5).abs() < 1e-12);
        let still = LocalTimes::from_visits(2.0, 2, vec![(vec![0, 0], 2.0)], 0);
        for q in [1.5, 2.0, 7.0] {
            assert!((lq_norm(&still, q).unwrap() - 2.0).abs() < 1e-14);
        }
        let uniform = LocalTimes::from_visits(3.0, 1, (0..3).map(|k| (vec![k], 1.0)).collect(), 2);
        let q = 2.5;
        assert!((lq_norm(&uniform, q).unwrap() - 3.0 * 3f64.powf(1.0 / q - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rescaled_local_times_identities() {
        for (d, alpha) in [(1, 1.0), (1, 2.7), (2, 1.9)] {
            let lt = simulate_walk(6.0, d, 3).unwrap();
            let prof = rescaled_local_times(&lt, alpha).unwrap();
            assert!((prof.integral() - 1.0).abs() < 1e-12);
            if alpha == 1.0 {
                for k in 0..lt.len() {
                    let i = LatticeBox::centered(d, lt.range()).index_of(lt.site(k)).unwrap();
                    assert!((prof.values[i] - lt.time(k) / 6.0).abs() < 1e-15);
                }
            }
            for q in [1.5, 2.0, 3.0] {
                let lhs = lt.t / (alpha * alpha) * prof.lq_norm(q);
                let e = -(d as f64 + (2.0 - d as f64) * q) / q;
                let rhs = alpha.powf(e) * lq_norm(&lt, q).unwrap();
                assert!((lhs / rhs - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn table_interpolates_cumulant() {
        let m = catalog_model("bounded-case-3").unwrap();
        let table = CumulantTable::new(&m, 5.0).unwrap();
        for s in [0.0, 0.013, 1.7, 4.999, 5.0] {
            let exact = m.cumulant_h(s).unwrap();
            assert!((table.eval(s) - exact).abs() < 1e-9 * (1.0 + exact.abs()));
        }
    }

    #[test]
    fn single_site_box_matches_survival() {
        let m = PotentialModel::double_exponential(1.0).unwrap();
        for t in [0.3, 1.0] {
            let est = annealed_mass_walk(&m, t, 0, 1, 100_000, 17).unwrap();
            let exact = m.cumulant_h(t).unwrap() - 2.0 * t;
            assert!((est.mean() - exact.exp()).abs() < 3.0 * est.se());
        }
    }

    #[test]
    fn zero_cumulant_gives_confinement_probability() {
        let zero = PotentialModel::constant(0.0).unwrap();
        let a = annealed_mass_walk(&zero, 1.0, 1, 1, 20_000, 3).unwrap();
        assert!(a.mean() <= 1.0);
        let exact = solve_pam(
            &LatticeField::constant(LatticeBox::centered(1, 1), 0.0),
            1.0,
            Initial::Flat,
            SemigroupMethod::Eigen,
        )
        .unwrap()
        .log_value(&[0])
        .unwrap()
        .exp();
        assert!((a.mean() - exact).abs() < 3.0 * a.se());
        let pm = annealed_mass_potential(&zero, 1.0, 1, 1, 5, 3).unwrap();
        assert!((pm.mean() - exact).abs() < 1e-12);
        assert!(pm.log_se.abs() < 1e-12);
        let two = moment_estimator(&zero, 2.0, 1.0, 1, 1, 20_000, 4).unwrap();
        assert!((two.estimate.mean() - exact * exact).abs() < 3.0 * two.estimate.se());
    }

    #[test]
    fn constant_field_estimators_agree_exactly() {
        let c = PotentialModel::constant(0.4).unwrap();
        let zero = PotentialModel::constant(0.0).unwrap();
        let a = annealed_mass_walk(&c, 1.5, 2, 1, 2000, 8).unwrap();
        let b = annealed_mass_walk(&zero, 1.5, 2, 1, 2000, 8).unwrap();
        assert!((a.log_mean - b.log_mean - 0.6).abs() < 1e-12);
        let pa = annealed_mass_potential(&c, 1.5, 2, 1, 3, 8).unwrap();
        let pb = annealed_mass_potential(&zero, 1.5, 2, 1, 3, 8).unwrap();
        assert!((pa.log_mean - pb.log_mean - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_time_estimators() {
        let m = PotentialModel::double_exponential(1.0).unwrap();
        let w = annealed_mass_walk(&m, 0.0, 1, 1, 10, 1).unwrap();
        assert_eq!(w.mean(), 1.0);
        let p = annealed_mass_potential(&m, 0.0, 1, 1, 10, 1).unwrap();
        assert!((p.mean() - 1.0).abs() < 1e-15 && p.log_se == 0.0);
    }

    #[test]
    fn walk_and_potential_estimators_agree() {
        let m = PotentialModel::double_exponential(1.0).unwrap();
        let w = annealed_mass_walk(&m, 1.0, 1, 1, 100_000, 21).unwrap();
        let p = annealed_mass_potential(&m, 1.0, 1, 1, 2000, 22).unwrap();
        let se = (w.se().powi(2) + p.se().powi(2)).sqrt();
        assert!((w.mean() - p.mean()).abs() < 3.0 * se, "{} {} {}", w.mean(), p.mean(), se);
    }

    #[test]
    fn integer_moment_one_is_annealed_mass() {
        let m = PotentialModel::double_exponential(1.0).unwrap();
        let a = annealed_mass_walk(&m, 1.0, 2, 1, 1000, 5).unwrap();
        let b = moment_estimator(&m, 1.0, 1.0, 2, 1, 1000, 5).unwrap();
        assert_eq!(a.log_mean, b.log_moment());
        assert_eq!(b.method, MomentMethod::Walks);
        let c = moment_estimator(&m, 1.5, 1.0, 2, 1, 20, 5).unwrap();
        assert_eq!(c.method, MomentMethod::PotentialMc);
        assert!(c.flagged);
    }

    fn bessel_i0(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= (x / 2.0) * (x / 2.0) / (k * k) as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn second_moment_of_local_times() {
        let (v, _) = self_intersection_auto(1.0, 1).unwrap();
        let oracle = crate::numerics::quad::integrate(
            |r| 2.0 * (1.0 - r) * (-2.0 * r).exp() * bessel_i0(2.0 * r),
            0.0,
            1.0,
            1e-14,
            1e-13,
        )
        .unwrap()
        .value;
        assert!((v - oracle).abs() < 1e-9, "{v} {oracle}");
        assert!(self_intersection_second_moment(1.0, &LatticeBox::centered(1, 1)).is_err());
        for t in [1e-3, 1e-5] {
            let (v, _) = self_intersection_auto(t, 2).unwrap();
            assert!((v / (t * t) - 1.0).abs() < 10.0 * t);
        }
        let (mean, se) = walk_statistic(1.0, 1, 100_000, 9, |lt| lt.sum_of_squares()).unwrap();
        assert!((mean - v).abs() < 3.0 * se);
    }

    #[test]
    fn confinement_monotone() {
        let zero = PotentialModel::constant(0.0).unwrap();
        let p = |t: f64, r: usize| annealed_mass_walk(&zero, t, r, 1, 20_000, 12).unwrap();
        let (a, b, c) = (p(1.0, 1), p(2.0, 1), p(1.0, 2));
        assert!(b.mean() <= a.mean() + 3.0 * (a.se().powi(2) + b.se().powi(2)).sqrt());
        assert!(c.mean() + 3.0 * (a.se().powi(2) + c.se().powi(2)).sqrt() >= a.mean());
    }
}
