//! Run configuration: scenario source, estimator roster, sweep grid,
//! family recipe, and mode flags. Configs are plain JSON documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::funclass::LadderSpec;
use crate::harness::seed::fnv1a;
use crate::scenario::{random_spectral_scenario, RandomScenarioParams, Scenario};
use crate::{Error, Result};

/// Estimator names the sweep engine knows how to run.
pub const KNOWN_ESTIMATORS: [&str; 5] =
    ["penalized_minimax", "dikkala", "liao", "bennett_flip", "both_worlds"];

/// Estimators that also have a population-mode implementation.
pub const POPULATION_ESTIMATORS: [&str; 2] = ["penalized_minimax", "bennett_flip"];

/// Where the scenario comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    /// Load a serialized scenario from a JSON file.
    File { path: String },
    /// Generate a random spectral scenario.
    Random {
        #[serde(default)]
        params: RandomScenarioParams,
        seed: u64,
    },
    /// Scenario embedded in the config document.
    Inline { scenario: Box<Scenario> },
}

impl ScenarioSource {
    pub fn materialize(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::File { path } => {
                let text = std::fs::read_to_string(path)?;
                Ok(serde_json::from_str(&text)?)
            }
            ScenarioSource::Random { params, seed } => random_spectral_scenario(params, *seed),
            ScenarioSource::Inline { scenario } => Ok((**scenario).clone()),
        }
    }
}

/// One estimator to run, with optional hyperparameters.
///
/// Recognized keys: `alpha` or `alpha_scale` (liao), `mu`, `mu_scale`,
/// `delta` (both_worlds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub name: String,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, f64>,
}

impl EstimatorSpec {
    pub fn named(name: &str) -> Self {
        EstimatorSpec { name: name.into(), hyperparams: BTreeMap::new() }
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.hyperparams.get(key).copied().unwrap_or(default)
    }
}

/// Recipe for building the hypothesis and discriminator families each
/// replication works with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    /// Truth members plus random distractors; `per_rep` redraw distractors
    /// for every replication instead of once per run.
    Realizable { distractors: usize, perturbation_scale: f64, per_rep: bool },
    /// Same, but the truth is replaced by anchors at the given
    /// approximation errors.
    Misspecified {
        distractors: usize,
        perturbation_scale: f64,
        eps_h: f64,
        eps_g: f64,
        per_rep: bool,
    },
    /// Deterministic geometric ladder around the truth.
    Ladder(LadderSpec),
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec::Realizable { distractors: 7, perturbation_scale: 0.5, per_rep: true }
    }
}

impl FamilySpec {
    /// Whether the truth pair is guaranteed to be a member.
    pub fn realizable(&self) -> bool {
        !matches!(self, FamilySpec::Misspecified { .. })
    }

    pub fn injected_errors(&self) -> Option<(f64, f64)> {
        match self {
            FamilySpec::Misspecified { eps_h, eps_g, .. } => Some((*eps_h, *eps_g)),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::Realizable { distractors, perturbation_scale, .. } => {
                if *perturbation_scale <= 0.0 && *distractors > 0 {
                    return Err(Error::Config("perturbation_scale must be positive".into()));
                }
            }
            FamilySpec::Misspecified { perturbation_scale, eps_h, eps_g, distractors, .. } => {
                if *perturbation_scale <= 0.0 && *distractors > 0 {
                    return Err(Error::Config("perturbation_scale must be positive".into()));
                }
                if *eps_h < 0.0 || *eps_g < 0.0 {
                    return Err(Error::Config("injected errors must be nonnegative".into()));
                }
            }
            FamilySpec::Ladder(spec) => {
                if spec.rungs == 0 {
                    return Err(Error::Config("ladder needs at least one rung".into()));
                }
            }
        }
        Ok(())
    }
}

/// Sweep behavior switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFlags {
    /// Fit against population objectives instead of sampled data.
    #[serde(default)]
    pub population: bool,
    /// Evaluate the finite-sample bound per replication and count
    /// violations (penalized minimax only).
    #[serde(default = "default_true")]
    pub check_bounds: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ModeFlags {
    fn default() -> Self {
        ModeFlags { population: false, check_bounds: true }
    }
}

/// Check tolerances the verify suite reads from the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Population-mode recovery must be this close in L2.
    #[serde(default = "default_identification")]
    pub identification: f64,
    /// Allowed gap between the two source-norm computations.
    #[serde(default = "default_source_gap")]
    pub source_gap: f64,
}

fn default_identification() -> f64 {
    1e-9
}

fn default_source_gap() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { identification: default_identification(), source_gap: default_source_gap() }
    }
}

fn default_n_grid() -> Vec<usize> {
    vec![512, 1024, 2048, 4096, 8192, 16384, 32768]
}

fn default_reps() -> usize {
    50
}

/// Full description of one harness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub families: FamilySpec,
    #[serde(default)]
    pub mode: ModeFlags,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators configured".into()));
        }
        for est in &self.estimators {
            if !KNOWN_ESTIMATORS.contains(&est.name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown estimator {:?}; known: {}",
                    est.name,
                    KNOWN_ESTIMATORS.join(", ")
                )));
            }
            if self.mode.population && !POPULATION_ESTIMATORS.contains(&est.name.as_str()) {
                return Err(Error::Config(format!(
                    "estimator {:?} has no population mode",
                    est.name
                )));
            }
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n grid is empty".into()));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("n grid must be strictly increasing".into()));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::Config("n grid values must be positive".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        self.families.validate()
    }

    /// Stable content hash of the config document, embedded in every
    /// report so mixed-config aggregation can be refused.
    pub fn config_hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        fnv1a(&bytes)
    }

    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}
