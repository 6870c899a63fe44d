use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, PamError, Result};
use crate::potential::{ModelKind, PotentialModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Classify,
    Scales,
    Moments,
    Quenched,
    Variational,
    Selfint,
    HeuristicProfile,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Classify => "classify",
            Experiment::Scales => "scales",
            Experiment::Moments => "moments",
            Experiment::Quenched => "quenched",
            Experiment::Variational => "variational",
            Experiment::Selfint => "selfint",
            Experiment::HeuristicProfile => "heuristic_profile",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(name.to_string()))
            .map_err(|_| PamError::InvalidInput(format!("unknown experiment `{name}`")))
    }
}

/// Which variational constant the `variational` experiment computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationalProblem {
    Chi,
    ChiTilde,
    ChiDiscrete,
    ChiGamma,
}

/// One experiment run. Unknown keys are rejected; everything is checked by
/// [`ExperimentConfig::validate`] before any computation starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PotentialModel>,
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    /// replica budget; defaults depend on the experiment
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// upper end of the classification grid
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify_t_max: Option<f64>,
    /// moment orders (moments)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    /// box radius (moments, heuristic_profile)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    /// number of independent realisations (quenched)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<VariationalProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// radial grid for the continuum problems
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_half_width: Option<f64>,
    /// `q` values of `‖ℓ_t‖_q` (selfint)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_values: Option<Vec<f64>>,
    /// conditioning fraction (heuristic_profile)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile: Option<f64>,

    /// the configuration as read, echoed into the output metadata
    #[serde(skip)]
    pub raw: Option<serde_json::Value>,
}

fn default_dim() -> usize {
    1
}

pub const DEFAULT_CLASSIFY_T_MAX: f64 = 1e8;
pub const DEFAULT_WALK_REPLICAS: usize = 100_000;
pub const DEFAULT_POTENTIAL_REPLICAS: usize = 1_000;
pub const DEFAULT_QUENCHED_SEEDS: usize = 5;
pub const DEFAULT_QUANTILE: f64 = 0.01;
pub const MAX_DIM: usize = 3;

impl ExperimentConfig {
    /// A config with every optional field unset.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            model: None,
            d: 1,
            t_grid: Vec::new(),
            replicas: None,
            seed: 0,
            out: None,
            classify_t_max: None,
            p_values: None,
            radius: None,
            seeds: None,
            radius_cap: None,
            problem: None,
            rho: None,
            gamma: None,
            delta: None,
            radial: None,
            grid_h: None,
            grid_half_width: None,
            q_values: None,
            quantile: None,
            raw: None,
        }
    }

    /// Parses and validates a JSON config, keeping the parsed document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let mut cfg: Self = serde_json::from_value(raw.clone())?;
        cfg.raw = Some(raw);
        cfg.validate()?;
        Ok(cfg)
    }

    /// The document echoed into output metadata.
    pub fn echo(&self) -> serde_json::Value {
        match &self.raw {
            Some(v) => v.clone(),
            None => serde_json::to_value(self).unwrap_or(serde_json::Value::Null),
        }
    }

    pub fn classify_t_max(&self) -> f64 {
        self.classify_t_max.unwrap_or(DEFAULT_CLASSIFY_T_MAX)
    }

    pub fn validate(&self) -> Result<()> {
        use Experiment::*;
        if self.d == 0 || self.d > MAX_DIM {
            return invalid(format!("d must be in 1..={MAX_DIM}"));
        }
        if let Some(m) = &self.model {
            m.validate()?;
        }
        for (i, &t) in self.t_grid.iter().enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return invalid("t_grid entries must be finite and positive");
            }
            if i > 0 && !(t > self.t_grid[i - 1]) {
                return invalid("t_grid must be strictly increasing");
            }
        }
        if self.replicas == Some(0) {
            return invalid("replicas must be positive");
        }
        if let Some(t) = self.classify_t_max {
            if !(t >= 1e6) || !t.is_finite() {
                return invalid("classify_t_max must be finite and >= 1e6");
            }
        }
        let needs_model = !matches!(self.experiment, Classify | Variational | Selfint);
        if needs_model && self.model.is_none() {
            return invalid(format!("experiment `{}` needs a model", self.experiment.as_str()));
        }
        let needs_times = matches!(self.experiment, Scales | Moments | Quenched | Selfint | HeuristicProfile);
        if needs_times && self.t_grid.is_empty() {
            return invalid(format!("experiment `{}` needs a nonempty t_grid", self.experiment.as_str()));
        }
        if self.experiment == Quenched && self.t_grid.iter().any(|&t| !(t > 1.0)) {
            return invalid("quenched times must exceed 1");
        }
        if let Some(ps) = &self.p_values {
            if ps.is_empty() || ps.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
                return invalid("p_values must be a nonempty list of positive numbers");
            }
        }
        if let Some(qs) = &self.q_values {
            if qs.is_empty() || qs.iter().any(|q| !(*q > 1.0) || !q.is_finite()) {
                return invalid("q_values must be a nonempty list of numbers > 1");
            }
        }
        if self.seeds == Some(0) {
            return invalid("seeds must be positive");
        }
        if self.radius_cap == Some(0) {
            return invalid("radius_cap must be positive");
        }
        for (name, v) in [("rho", self.rho), ("grid_h", self.grid_h), ("grid_half_width", self.grid_half_width)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return invalid(format!("{name} must be finite and positive"));
                }
            }
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return invalid("gamma must lie in [0, 1)");
            }
        }
        if let Some(delta) = self.delta {
            if !(delta >= 0.0) || !delta.is_finite() {
                return invalid("delta must be finite and >= 0");
            }
        }
        if let Some(q) = self.quantile {
            if !(q > 0.0 && q <= 0.5) {
                return invalid("quantile must lie in (0, 0.5]");
            }
        }
        if self.experiment == Variational {
            match self.problem {
                None => return invalid("variational experiment needs `problem`"),
                Some(VariationalProblem::ChiDiscrete) => {
                    if self.delta.is_none() {
                        return invalid("chi_discrete needs `delta`");
                    }
                }
                Some(p) => {
                    if self.rho.is_none() && self.model.is_none() {
                        return invalid("continuum variational problems need `rho` or a model");
                    }
                    if p == VariationalProblem::ChiGamma && self.gamma.is_none() {
                        return invalid("chi_gamma needs `gamma`");
                    }
                }
            }
        }
        if self.experiment == Classify {
            if let Some(PotentialModel { kind: ModelKind::Constant { .. }, .. }) = self.model {
                return invalid("a constant potential has no tail class");
            }
        }
        Ok(())
    }
}
