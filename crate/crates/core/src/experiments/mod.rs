//! Named experiments, their configuration and their file outputs.

mod config;
mod heuristic;
mod result;
mod runners;

pub use config::*;
pub use heuristic::{run_heuristic_profile, MIN_CONDITIONED, WINDOW};
pub use result::{emit, to_json_string, Cell, ExperimentResult, Series, SUMMARY_FILE, TIMING_FILE};
pub use runners::{
    approach_fraction, moments_radius, run_classify, run_moments, run_quenched, run_scales, run_selfint,
    run_variational, FINITE_T_NOTE, SELFINT_THETAS,
};

use crate::error::Result;

/// Shortest exact decimal form is not needed; outputs use 17 significant
/// digits so that they round-trip and are byte-stable across runs.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// Validates the config and runs the experiment it names.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut r = match cfg.experiment {
        Experiment::Classify => run_classify(cfg),
        Experiment::Scales => run_scales(cfg),
        Experiment::Moments => run_moments(cfg),
        Experiment::Quenched => run_quenched(cfg),
        Experiment::Variational => run_variational(cfg),
        Experiment::Selfint => run_selfint(cfg),
        Experiment::HeuristicProfile => run_heuristic_profile(cfg),
    }?;
    r.wall_time_s = start.elapsed().as_secs_f64();
    Ok(r)
}
