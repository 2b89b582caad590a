//! Experiment configuration (TOML, `version = 1`).
//!
//! ```toml
//! version = 1
//! seed = 7
//!
//! [data]
//! source = "synth"          # or "csv" with `path` and a [data.mapping]
//! archetype = "ac-only"
//!
//! [split]
//! train = [{ start = "2018-04-01", end = "2018-07-02" }]
//! test = [{ start = "2018-07-02", end = "2018-08-02" }]
//!
//! [reward]                  # generating reward of the expert
//! w_ac = 0.05
//! revenue = "reduction_only"
//! discomfort = "quadratic"
//!
//! [price]
//! model = "constant"
//! value = 0.1
//!
//! [dqn]
//! episodes = 1500
//!
//! [irl]
//! max_iterations = 10
//! ```
//!
//! Every section except `data` may be omitted; omitted keys take their
//! defaults. The resolved configuration is written next to the artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use irl_dr_core::data_io::{ColumnMapping, DateRange, SplitSpec};
use irl_dr_core::dqn::TrainConfig;
use irl_dr_core::environment::PriceModel;
use irl_dr_core::irl_exact::Gridworld;
use irl_dr_core::irl_sampled::IrlConfig;
use irl_dr_core::rewards::TrueReward;
use irl_dr_core::synth::Archetype;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub reward: TrueReward,
    #[serde(default)]
    pub price: PriceModel,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub irl: IrlSection,
    #[serde(default)]
    pub exact: ExactSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synth {
        archetype: Archetype,
        /// Generator seed; the master seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        days: Option<usize>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        mapping: ColumnMapping,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: Vec<DateRange>,
    pub test: Vec<DateRange>,
    /// Allows evaluating on training days (single-day studies).
    pub allow_overlap: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train: s.train,
            test: s.test,
            allow_overlap: false,
        }
    }
}

impl SplitConfig {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }
}

/// Agent hyperparameters; seeds derive from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            episodes: t.episodes,
            batch_size: t.batch_size,
            gamma: t.gamma,
            tau: t.tau,
            learning_rate: t.learning_rate,
            epsilon_decay: t.epsilon_decay,
            epsilon_floor: t.epsilon_floor,
            buffer_capacity: t.buffer_capacity,
            hidden: t.hidden,
        }
    }
}

impl DqnConfig {
    pub fn train_config(&self, episodes: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            episodes,
            batch_size: self.batch_size,
            gamma: self.gamma,
            tau: self.tau,
            learning_rate: self.learning_rate,
            epsilon_decay: self.epsilon_decay,
            epsilon_floor: self.epsilon_floor,
            buffer_capacity: self.buffer_capacity,
            hidden: self.hidden.clone(),
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlSection {
    pub max_iterations: usize,
    pub margin_tolerance: f64,
    pub gamma: f64,
    /// Training episodes per inner agent; `dqn.episodes` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    /// Number of final training days used to pick the weights.
    pub validation_days: usize,
}

impl Default for IrlSection {
    fn default() -> Self {
        let c = IrlConfig::default();
        Self {
            max_iterations: c.max_iterations,
            margin_tolerance: c.margin_tolerance,
            gamma: c.gamma,
            episodes: None,
            validation_days: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactSection {
    pub size: usize,
    pub gamma: f64,
    pub lambdas: Vec<f64>,
    pub r_max: f64,
}

impl Default for ExactSection {
    fn default() -> Self {
        let g = Gridworld::default();
        Self {
            size: g.size,
            gamma: g.gamma,
            lambdas: vec![0.1, 0.3, 1.0, 3.0],
            r_max: 1.0,
        }
    }
}

impl ExactSection {
    pub fn gridworld(&self) -> Gridworld {
        Gridworld {
            size: self.size,
            goal: (self.size - 1, self.size - 1),
            gamma: self.gamma,
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML config, or the `config` of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::User(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
            serde_json::from_value(manifest.get("config").cloned().unwrap_or(manifest))
                .map_err(|e| CliError::User(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::User(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let user = |m: String| Err(CliError::User(m));
        if self.version != CONFIG_VERSION {
            return user(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.split.train.is_empty() || self.split.test.is_empty() {
            return user("split needs train and test ranges".into());
        }
        if self.split.allow_overlap {
            for r in self.split.train.iter().chain(&self.split.test) {
                if r.start >= r.end {
                    return user(format!("empty date range {} .. {}", r.start, r.end));
                }
            }
        } else {
            self.split.spec().validate().map_err(|e| CliError::User(e.to_string()))?;
        }
        if !self.reward.is_valid() {
            return user("reward weights must be nonnegative".into());
        }
        self.price.validate().map_err(|e| CliError::User(e.to_string()))?;
        self.dqn
            .train_config(self.dqn.episodes, 0)
            .validate()
            .map_err(|e| CliError::User(e.to_string()))?;
        if !(self.irl.margin_tolerance >= 0.0) || !(self.irl.gamma >= 0.0 && self.irl.gamma < 1.0) {
            return user("irl: need margin_tolerance >= 0 and gamma in [0, 1)".into());
        }
        if self.irl.validation_days == 0 {
            return user("irl.validation_days must be at least 1".into());
        }
        if self.exact.size < 2 || self.exact.lambdas.is_empty() || !(self.exact.r_max > 0.0) {
            return user("exact: need size >= 2, some lambdas and r_max > 0".into());
        }
        if self.exact.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return user("exact: lambdas must be nonnegative".into());
        }
        if let DataConfig::Csv { mapping, .. } = &self.data {
            mapping.resolve().map_err(|e| CliError::User(e.to_string()))?;
        }
        Ok(())
    }

    pub fn irl_config(&self) -> IrlConfig {
        let episodes = self.irl.episodes.unwrap_or(self.dqn.episodes);
        IrlConfig {
            max_iterations: self.irl.max_iterations,
            margin_tolerance: self.irl.margin_tolerance,
            gamma: self.irl.gamma,
            agent: self.dqn.train_config(episodes, 0),
            seed: seeds::irl(self.seed),
        }
    }
}

/// Seeds of the pipeline stages, derived from the master seed.
pub mod seeds {
    pub fn expert(master: u64) -> u64 {
        master
    }

    pub fn irl(master: u64) -> u64 {
        master.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407)
    }
}
