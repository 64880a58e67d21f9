//! JSON scenario files.
//!
//! Every section is optional and filled with defaults; unknown keys are rejected with the
//! path of the offending key. [`ScenarioConfig::effective`] returns the document with all
//! defaults written out, which re-parses to the same configuration.

use crate::conditions::{EvalOptions, FunctionalSelection};
use crate::mc::{DistanceSelection, StudyPlan, MIN_SAMPLES};
use crate::param::IndexSpec;
use crate::quad::QuadOptions;
use crate::tri_array::TriangularArray;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Conditions,
    Distances,
    Study,
    Counterexample,
    Selfcheck,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::Conditions => "conditions",
            Task::Distances => "distances",
            Task::Study => "study",
            Task::Counterexample => "counterexample",
            Task::Selfcheck => "selfcheck",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default = "default_n")]
    pub n: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
}

fn default_n() -> Vec<u64> {
    vec![16, 64, 256, 1024, 4096, 10_000]
}

fn default_epsilon() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}

fn default_delta() -> Vec<f64> {
    vec![1.0]
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            n: default_n(),
            epsilon: default_epsilon(),
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    #[serde(default = "default_samples", alias = "M")]
    pub samples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_samples() -> usize {
    100_000
}

fn default_alpha() -> f64 {
    0.01
}

fn default_seed() -> u64 {
    42
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            alpha: default_alpha(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Index tail mass left out of randomized functionals and mixtures.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_rotar_tail_tol")]
    pub rotar_tail_tol: f64,
}

fn default_eta() -> f64 {
    1e-10
}

fn default_quad_tol() -> f64 {
    1e-10
}

fn default_rotar_tail_tol() -> f64 {
    1e-12
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            quad_tol: default_quad_tol(),
            rotar_tail_tol: default_rotar_tail_tol(),
        }
    }
}

impl Numerics {
    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            eta: self.eta,
            quad: QuadOptions::with_abs_tol(self.quad_tol),
            rotar_tail_tol: self.rotar_tail_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub format: Format,
    #[serde(default = "default_out")]
    pub path: String,
}

fn default_out() -> String {
    "randsum-out".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            path: default_out(),
        }
    }
}

/// Settings of the counterexample run on the Shiryaev array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleSettings {
    #[serde(default = "default_ce_n")]
    pub n: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    /// ε at which the Lindeberg values are compared with the Monte Carlo oracle.
    #[serde(default = "default_ce_lindeberg_eps")]
    pub lindeberg_epsilon: f64,
    #[serde(default = "default_ce_rotar_tol")]
    pub rotar_tol: f64,
    #[serde(default = "default_ce_clt_tol")]
    pub clt_tol: f64,
    #[serde(default = "default_ce_feller_tol")]
    pub feller_tol: f64,
    /// Draws per entry for the truncated-moment oracle.
    #[serde(default = "default_samples")]
    pub oracle_samples: usize,
}

fn default_ce_n() -> Vec<u64> {
    vec![4, 8, 16, 32]
}

fn default_ce_lindeberg_eps() -> f64 {
    0.5
}

fn default_ce_rotar_tol() -> f64 {
    1e-8
}

fn default_ce_clt_tol() -> f64 {
    1e-10
}

fn default_ce_feller_tol() -> f64 {
    1e-12
}

impl Default for CounterexampleSettings {
    fn default() -> Self {
        Self {
            n: default_ce_n(),
            epsilon: default_epsilon(),
            lindeberg_epsilon: default_ce_lindeberg_eps(),
            rotar_tol: default_ce_rotar_tol(),
            clt_tol: default_ce_clt_tol(),
            feller_tol: default_ce_feller_tol(),
            oracle_samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrendKind {
    StrictlyDecreasing,
    DecreasingWithinBounds,
}

/// A claim about one study trend, checked after the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Trend name, e.g. "RL@0.1" or "empirical".
    pub metric: String,
    #[serde(default)]
    pub trend: Option<TrendKind>,
    #[serde(default)]
    pub final_below: Option<f64>,
    #[serde(default)]
    pub final_above: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub array: Option<TriangularArray>,
    /// Sum Σ_{j ≤ ν} (X_j − a_j)/B_ν of a series array instead of the row-n sum.
    #[serde(default)]
    pub self_normalized: bool,
    #[serde(default)]
    pub index: Option<IndexSpec>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub monte_carlo: MonteCarlo,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub functionals: FunctionalSelection,
    #[serde(default)]
    pub distances: DistanceSelection,
    #[serde(default)]
    pub outputs: Outputs,
    /// Tasks this file is meant for; empty allows all.
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub counterexample: CounterexampleSettings,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all sections have defaults")
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::at(if path == "." { "<root>".into() } else { path }, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive_list("grids.n", &self.grids.n.iter().map(|&n| n as f64).collect::<Vec<_>>(), 1.0)?;
        positive_list("grids.epsilon", &self.grids.epsilon, 0.0)?;
        positive_list("grids.delta", &self.grids.delta, 0.0)?;
        positive_list("counterexample.n", &self.counterexample.n.iter().map(|&n| n as f64).collect::<Vec<_>>(), 1.0)?;
        positive_list("counterexample.epsilon", &self.counterexample.epsilon, 0.0)?;
        for (name, v) in [
            ("counterexample.lindeberg_epsilon", self.counterexample.lindeberg_epsilon),
            ("counterexample.rotar_tol", self.counterexample.rotar_tol),
            ("counterexample.clt_tol", self.counterexample.clt_tol),
            ("counterexample.feller_tol", self.counterexample.feller_tol),
            ("numerics.quad_tol", self.numerics.quad_tol),
            ("numerics.rotar_tail_tol", self.numerics.rotar_tail_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::at(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.counterexample.oracle_samples < 2 {
            return Err(ConfigError::at("counterexample.oracle_samples", "must be ≥ 2"));
        }
        if !(self.numerics.eta > 0.0 && self.numerics.eta <= 1e-3) {
            return Err(ConfigError::at("numerics.eta", format!("must lie in (0, 1e-3], got {}", self.numerics.eta)));
        }
        if self.monte_carlo.samples < MIN_SAMPLES {
            return Err(ConfigError::at(
                "monte_carlo.samples",
                format!("must be ≥ {MIN_SAMPLES}, got {}", self.monte_carlo.samples),
            ));
        }
        if !(self.monte_carlo.alpha > 0.0 && self.monte_carlo.alpha < 1.0) {
            return Err(ConfigError::at(
                "monte_carlo.alpha",
                format!("must lie in (0, 1), got {}", self.monte_carlo.alpha),
            ));
        }
        for (i, t) in self.functionals.cf_t.iter().enumerate() {
            if !t.is_finite() {
                return Err(ConfigError::at(format!("functionals.cf_t[{i}]"), "must be finite"));
            }
        }
        if let Some(a) = &self.array {
            a.check().map_err(|e| ConfigError::at("array", e))?;
            if self.self_normalized && !matches!(a, TriangularArray::Series { .. }) {
                return Err(ConfigError::at("self_normalized", "requires a series array"));
            }
        } else if self.self_normalized {
            return Err(ConfigError::at("self_normalized", "requires a series array"));
        }
        if let Some(ix) = &self.index {
            for &n in &self.grids.n {
                ix.resolve(n).map_err(|e| ConfigError::at("index", format!("at n = {n}: {e}")))?;
            }
        }
        Ok(())
    }

    /// The configuration with every default written out.
    pub fn effective(&self) -> serde_json::Value {
        let mut cfg = self.clone();
        cfg.label = Some(self.label());
        serde_json::to_value(cfg).expect("config is serializable")
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .or_else(|| self.array.as_ref().map(|a| a.label()))
            .unwrap_or_else(|| "scenario".into())
    }

    pub fn allows(&self, task: Task) -> Result<(), ConfigError> {
        if self.tasks.is_empty() || self.tasks.contains(&task) {
            Ok(())
        } else {
            Err(ConfigError::at("tasks", format!("this configuration does not enable the `{task}` task")))
        }
    }

    pub fn require_array(&self) -> Result<&TriangularArray, ConfigError> {
        self.array.as_ref().ok_or_else(|| ConfigError::at("array", "missing section"))
    }

    pub fn require_index(&self) -> Result<&IndexSpec, ConfigError> {
        self.index.as_ref().ok_or_else(|| ConfigError::at("index", "missing section"))
    }

    /// Study plan for the `study` and `distances` tasks; δ is the first entry of the δ grid.
    pub fn study_plan(&self) -> Result<StudyPlan, ConfigError> {
        Ok(StudyPlan {
            label: self.label(),
            array: self.require_array()?.clone(),
            self_normalized: self.self_normalized,
            index: self.require_index()?.clone(),
            n_grid: self.grids.n.clone(),
            eps_grid: self.grids.epsilon.clone(),
            delta: self.grids.delta[0],
            samples: self.monte_carlo.samples,
            alpha: self.monte_carlo.alpha,
            seed: self.monte_carlo.seed,
            functionals: self.functionals.clone(),
            distances: self.distances,
            eval: self.numerics.eval_options(),
        })
    }
}

fn positive_list(path: &str, values: &[f64], min: f64) -> Result<(), ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::at(path, "must not be empty"));
    }
    for (i, &v) in values.iter().enumerate() {
        let ok = if min > 0.0 { v >= min } else { v > 0.0 };
        if !(ok && v.is_finite()) {
            let bound = if min > 0.0 { format!("≥ {min}") } else { "> 0".into() };
            return Err(ConfigError::at(format!("{path}[{i}]"), format!("must be finite and {bound}, got {v}")));
        }
    }
    Ok(())
}
