//! Experiment files: one environment, one agent pool, several selectors.

use std::path::PathBuf;

use modsel::mdp::NonstationarySchedule;
use modsel::training::{RunConfig, SCHEMA_VERSION};
use modsel::{presets, AgentConfig, SelectorConfig};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

fn default_seeds() -> u64 {
    1
}

fn default_window() -> usize {
    100
}

fn default_log_every() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub total_rounds: u64,
    #[serde(default = "default_seeds")]
    pub num_seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Trailing episodes averaged in summaries.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub is_sharing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_ledger: Option<bool>,
    /// Also train every agent alone for the same number of rounds.
    #[serde(default)]
    pub solo_baselines: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub environment: EnvironmentConfig,
    pub agents: Vec<AgentConfig>,
    pub selectors: Vec<SelectorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    /// A named environment with default parameters.
    Preset {
        name: String,
    },
    Chain {
        states: usize,
        horizon: usize,
        #[serde(default)]
        slip: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        horizon: usize,
        #[serde(default)]
        slip: f64,
    },
    Bandit {
        means: Vec<f64>,
    },
    SwitchingChain {
        states: usize,
        horizon: usize,
        /// Defaults to the round after the midpoint of the run.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        switch_round: Option<u64>,
        #[serde(default)]
        slip: f64,
        goal_p: f64,
    },
    SyntheticArena {
        optimal_value: f64,
        floor: f64,
    },
}

impl EnvironmentConfig {
    pub fn build(&self, total_rounds: u64) -> Result<NonstationarySchedule, modsel::MdpError> {
        Ok(match self {
            EnvironmentConfig::Preset { name } => presets::by_name(name)?,
            EnvironmentConfig::Chain {
                states,
                horizon,
                slip,
            } => presets::chain(*states, *horizon, *slip)?.into(),
            EnvironmentConfig::Gridworld {
                width,
                height,
                horizon,
                slip,
            } => presets::gridworld(*width, *height, *horizon, *slip)?.into(),
            EnvironmentConfig::Bandit { means } => presets::bandit(means)?.into(),
            EnvironmentConfig::SwitchingChain {
                states,
                horizon,
                switch_round,
                slip,
                goal_p,
            } => presets::switching_chain(
                *states,
                *horizon,
                switch_round.unwrap_or(total_rounds / 2 + 1),
                *slip,
                *goal_p,
            )?,
            EnvironmentConfig::SyntheticArena {
                optimal_value,
                floor,
            } => presets::synthetic_arena(*optimal_value, *floor)?.into(),
        })
    }
}

fn invalid(field: &str, message: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {message}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs serialize to TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.num_seeds == 0 {
            return Err(invalid("num_seeds", "must be at least 1"));
        }
        if self.window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        if self.selectors.is_empty() {
            return Err(invalid("selectors", "no selector configured"));
        }
        self.schedule()?;
        for (k, selector) in self.selectors.iter().enumerate() {
            let config = self.run_config(selector.clone())?;
            config
                .validate()
                .map_err(|e| invalid(&format!("selectors[{k}]"), e))?;
            selector
                .build(config.num_agents(), config.total_rounds, 0)
                .map_err(|e| invalid(&format!("selectors[{k}]"), e))?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NonstationarySchedule, HarnessError> {
        self.environment
            .build(self.total_rounds)
            .map_err(|e| invalid("environment", e))
    }

    /// Run description for one selector at the configured master seed.
    pub fn run_config(&self, selector: SelectorConfig) -> Result<RunConfig, HarnessError> {
        let mut config = RunConfig::new(
            selector,
            self.agents.clone(),
            self.schedule()?,
            self.total_rounds,
            self.master_seed,
        );
        config.is_sharing = self.is_sharing;
        config.log_every = self.log_every;
        config.exact_ledger = self.exact_ledger;
        Ok(config)
    }

    /// Directory names for the selectors, suffixed when a kind repeats.
    pub fn selector_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.selectors.len());
        for (k, s) in self.selectors.iter().enumerate() {
            let name = s.kind().name();
            let earlier = self.selectors[..k]
                .iter()
                .filter(|o| o.kind() == s.kind())
                .count();
            labels.push(if earlier == 0 {
                name.to_string()
            } else {
                format!("{name}_{earlier}")
            });
        }
        labels
    }
}

/// Experiment files shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    (
        "architecture-analogue",
        include_str!("../presets/architecture-analogue.toml"),
    ),
    (
        "step-size-selection",
        include_str!("../presets/step-size-selection.toml"),
    ),
    (
        "self-model-selection",
        include_str!("../presets/self-model-selection.toml"),
    ),
    (
        "nonstationary-switch",
        include_str!("../presets/nonstationary-switch.toml"),
    ),
    (
        "synthetic-allocation",
        include_str!("../presets/synthetic-allocation.toml"),
    ),
];

pub fn bundled(name: &str) -> Option<ExperimentConfig> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentConfig::from_toml(text).expect("bundled presets are valid"))
}
