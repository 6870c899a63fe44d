//! Shape of the potential and of the solution on high-mass samples.
//!
//! Each potential draw is solved from a unit mass at the origin. Around the
//! site where the solution peaks, the rescaled potential
//! `α²[ξ(z* + ⌊xα⌋) - H(tα^{-d}) α^d / t]` and the L²-normalised solution
//! `v(t, z* + ⌊xα⌋)` are read off on a window of half-width
//! [`WINDOW`] in rescaled units, then averaged over the draws whose total
//! mass lies in the top quantile.

use rayon::prelude::*;

use super::config::*;
use super::result::{ExperimentResult, Series};
use super::runners::{base_result, label_of, model_report, refuse, Scales, FINITE_T_NOTE};
use crate::classify::ClassLabel;
use crate::error::{invalid, Result};
use crate::lattice::{LatticeBox, SemigroupMethod};
use crate::pam::{solve_pam, Initial};
use crate::seed::derive_seed;
use crate::variational::{Grid, Profile};

/// Window half-width in rescaled units.
pub const WINDOW: f64 = 3.0;
/// Fewer conditioned samples than this flags the row.
pub const MIN_CONDITIONED: usize = 10;

/// Window profiles of one potential draw.
struct Sample {
    log_mass: f64,
    potential: Vec<f64>,
    solution: Vec<f64>,
}

/// Averaged profiles and their distances to the predicted shapes.
#[derive(Debug, Clone)]
pub struct ShapeSummary {
    pub potential: Profile,
    pub solution: Profile,
    /// L² distance to `ψ_ρ` after removing the best vertical shift
    pub potential_distance: f64,
    /// L² distance of the potential profile to its best constant
    pub potential_flatness: f64,
    /// L² distance of the normalised solution profile to `g_ρ`
    pub solution_distance: f64,
}

/// `‖f - c‖₂` for the weighted-mean constant `c`.
fn distance_to_constant(f: &Profile) -> f64 {
    let w = f.grid.discretize().weights;
    let total: f64 = w.iter().sum();
    let c = f.integral() / total;
    f.map(|x| x - c).l2_norm_sq().sqrt()
}

fn average(grid: &Grid, rows: &[&[f64]]) -> Profile {
    let n = rows.len() as f64;
    let values = (0..grid.len()).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    Profile::new(grid.clone(), values).expect("window size")
}

fn summarize(grid: &Grid, samples: &[&Sample], rho: f64) -> ShapeSummary {
    let pots: Vec<&[f64]> = samples.iter().map(|s| s.potential.as_slice()).collect();
    let sols: Vec<&[f64]> = samples.iter().map(|s| s.solution.as_slice()).collect();
    let potential = average(grid, &pots);
    let solution = average(grid, &sols).normalized_l2();
    let psi = Profile::parabola(grid.clone(), rho);
    let g = Profile::gaussian(grid.clone(), rho);
    let diff = Profile::new(grid.clone(), potential.values.iter().zip(&psi.values).map(|(a, b)| a - b).collect())
        .expect("same grid");
    let sdiff = Profile::new(grid.clone(), solution.values.iter().zip(&g.values).map(|(a, b)| a - b).collect())
        .expect("same grid");
    ShapeSummary {
        potential_distance: distance_to_constant(&diff),
        potential_flatness: distance_to_constant(&potential),
        solution_distance: sdiff.l2_norm_sq().sqrt(),
        potential,
        solution,
    }
}

pub fn run_heuristic_profile(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = cfg.model.expect("validated");
    let report = model_report(cfg, &model)?;
    let label = label_of(report.as_ref());
    if report.is_some() && label != Some(ClassLabel::AlmostBounded) {
        return Err(refuse(cfg, "the shape heuristic concerns almost-bounded models"));
    }
    let d = cfg.d;
    let scales = Scales::new(&model, report.as_ref(), d);
    let rho = if scales.rho.is_finite() { scales.rho } else { 1.0 };
    let n = cfg.replicas.unwrap_or(DEFAULT_POTENTIAL_REPLICAS);
    let quantile = cfg.quantile.unwrap_or(DEFAULT_QUANTILE);

    let mut r = base_result(cfg, report.as_ref());
    let mut dist = Series::new(
        "distances",
        &[
            "t",
            "alpha",
            "box_radius",
            "window_radius",
            "samples",
            "conditioned",
            "potential_distance_conditioned",
            "potential_distance_unconditioned",
            "solution_distance_conditioned",
            "solution_distance_unconditioned",
            "flagged",
        ],
    );
    for (k, &t) in cfg.t_grid.iter().enumerate() {
        let alpha = scales.alpha(t)?;
        let w = (WINDOW * alpha).ceil() as usize;
        let radius = match cfg.radius {
            Some(rad) if rad < w => return invalid(format!("radius must be at least the window radius {w}")),
            Some(rad) => rad,
            None => 2 * w + (2.0 * t).sqrt().ceil() as usize,
        };
        let lbox = LatticeBox::centered(d, radius);
        let grid = Grid::Cartesian { d, h: 1.0 / alpha, radius: w };
        let window = LatticeBox::centered(d, w);
        let s = t / alpha.powi(d as i32);
        let shift = model.cumulant_h(s)? / s;
        let seed = derive_seed(cfg.seed, k as u64);

        let samples: Vec<Sample> = (0..n as u64)
            .into_par_iter()
            .map(|i| -> Result<Sample> {
                let xi = model.sample_field(&lbox, derive_seed(seed, i));
                if xi.values.iter().any(|x| x.is_infinite()) {
                    return Err(refuse(cfg, "potentials with hard traps have no rescaled profile"));
                }
                let sol = solve_pam(&xi, t, Initial::Delta0, SemigroupMethod::Ode)?;
                let v = &sol.v.values;
                // peak among sites whose window fits in the box
                let inner = radius - w;
                let peak = lbox
                    .sites()
                    .enumerate()
                    .filter(|(_, z)| z.iter().all(|c| c.unsigned_abs() as usize <= inner))
                    .max_by(|a, b| v.values[a.0].total_cmp(&v.values[b.0]).then(b.0.cmp(&a.0)))
                    .map(|(_, z)| z)
                    .expect("nonempty box");
                let mut potential = Vec::with_capacity(window.len());
                let mut solution = Vec::with_capacity(window.len());
                for off in window.sites() {
                    let z: Vec<i64> = peak.iter().zip(&off).map(|(a, b)| a + b).collect();
                    let idx = lbox.index_of(&z).expect("window inside box");
                    potential.push(alpha * alpha * (xi.values[idx] - shift));
                    solution.push(v.values[idx]);
                }
                let sol_profile = Profile::new(grid.clone(), solution)?.normalized_l2();
                Ok(Sample { log_mass: sol.log_total_mass, potential, solution: sol_profile.values })
            })
            .collect::<Result<_>>()?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| samples[b].log_mass.total_cmp(&samples[a].log_mass).then(a.cmp(&b)));
        let top = ((quantile * n as f64).ceil() as usize).clamp(1, n);
        let conditioned: Vec<&Sample> = order[..top].iter().map(|&i| &samples[i]).collect();
        let all: Vec<&Sample> = samples.iter().collect();
        let cond = summarize(&grid, &conditioned, rho);
        let uncond = summarize(&grid, &all, rho);
        let flagged = top < MIN_CONDITIONED;
        dist.push(vec![
            t.into(),
            alpha.into(),
            radius.into(),
            w.into(),
            n.into(),
            top.into(),
            cond.potential_distance.into(),
            uncond.potential_distance.into(),
            cond.solution_distance.into(),
            uncond.solution_distance.into(),
            flagged.into(),
        ]);
        let prefix = format!("t{k}");
        r.scalar(&format!("{prefix}.potential_distance_conditioned"), cond.potential_distance);
        r.scalar(&format!("{prefix}.potential_distance_unconditioned"), uncond.potential_distance);
        r.scalar(&format!("{prefix}.solution_distance_conditioned"), cond.solution_distance);
        r.scalar(&format!("{prefix}.solution_distance_unconditioned"), uncond.solution_distance);
        r.scalar(&format!("{prefix}.potential_flatness_conditioned"), cond.potential_flatness);
        r.scalar(&format!("{prefix}.solution_norm_conditioned"), cond.solution.l2_norm_sq().sqrt());

        let psi = Profile::parabola(grid.clone(), rho);
        let g = Profile::gaussian(grid.clone(), rho);
        let mut prof = Series::new(
            &format!("profile_{prefix}"),
            &(1..=d)
                .map(|j| format!("x{j}"))
                .chain(
                    [
                        "potential_conditioned",
                        "potential_unconditioned",
                        "psi_rho",
                        "solution_conditioned",
                        "solution_unconditioned",
                        "g_rho",
                    ]
                    .map(String::from),
                )
                .collect::<Vec<_>>()
                .iter()
                .map(String::as_str)
                .collect::<Vec<_>>(),
        );
        for i in 0..grid.len() {
            let mut row: Vec<_> = grid.position(i).into_iter().map(Into::into).collect();
            row.extend([
                cond.potential.values[i].into(),
                uncond.potential.values[i].into(),
                psi.values[i].into(),
                cond.solution.values[i].into(),
                uncond.solution.values[i].into(),
                g.values[i].into(),
            ]);
            prof.push(row);
        }
        r.series.push(prof);
    }
    r.series.insert(0, dist);
    r.scalar("rho", rho);
    r.scalar("quantile", quantile);
    r.meta("finite_t_note", FINITE_T_NOTE);
    r.meta(
        "agreement",
        "comparative only: the conditioned solution profile should lie closer to g_rho than the unconditioned average",
    );
    Ok(r)
}
