//! Experiment configuration files (TOML).
//!
//! ```toml
//! mode = "abps"            # abps | abps-pbt | independent-baseline
//! seed = 3
//! out = "results"
//!
//! [env]
//! kind = "gridworld"
//! width = 6
//! height = 6
//! max_episode_steps = 50
//!
//! [abps]
//! total_env_steps = 20000
//! strategy = { kind = "ucb", xi = 2.0 }
//!
//! [[pool]]
//! hidden_sizes = [64]
//! learning_rate = 1e-3
//! epsilon_decay_steps = 5000
//! ```
//!
//! Instead of `[[pool]]` entries a `[prior]` table may describe a random
//! pool. Resolving a config samples that pool and replaces the prior with
//! it, so the resolved file reruns the same experiment exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abps::{AbpsConfig, AgentSpec};
use crate::env::EnvSpec;
use crate::learner::HyperParams;
use crate::pbt::PbtConfig;
use crate::seeding::{self, tag};
use crate::{Error, Result};

use super::prior::{sample_pool, PoolPrior};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Abps,
    AbpsPbt,
    IndependentBaseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Abps => "abps",
            Mode::AbpsPbt => "abps-pbt",
            Mode::IndependentBaseline => "independent-baseline",
        }
    }
}

/// A pool member in a config file; `id` defaults to its position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct PoolEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u32>,
    #[serde(flatten)]
    pub hyper: HyperParams,
}

// Parsed by hand because `deny_unknown_fields` is lost through `flatten`.
impl TryFrom<toml::Table> for PoolEntry {
    type Error = Error;

    fn try_from(mut table: toml::Table) -> Result<Self> {
        let id = table
            .remove("id")
            .map(|v| v.try_into::<u32>())
            .transpose()?;
        let hyper: HyperParams = toml::Value::Table(table).try_into()?;
        Ok(PoolEntry { id, hyper })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub env: EnvSpec,
    pub abps: AbpsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbt: Option<PbtConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<PoolEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PoolPrior>,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, abps: AbpsConfig, pool: Vec<AgentSpec>) -> Self {
        ExperimentConfig {
            mode: Mode::Abps,
            seed: 0,
            out: None,
            env,
            abps,
            pbt: None,
            pool: Some(
                pool.into_iter()
                    .map(|a| PoolEntry {
                        id: Some(a.id),
                        hyper: a.hyper,
                    })
                    .collect(),
            ),
            prior: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit.
        if i64::try_from(self.seed).is_err() {
            return Err(Error::config("seed must not exceed 2^63 - 1"));
        }
        self.env.validate()?;
        self.abps.validate()?;
        if let Some(pbt) = &self.pbt {
            pbt.validate()?;
        }
        match (&self.pool, &self.prior) {
            (Some(_), Some(_)) => Err(Error::config("give either [[pool]] or [prior], not both")),
            (None, None) => Err(Error::config(
                "a [[pool]] list or a [prior] table is required",
            )),
            (Some(pool), None) => {
                if pool.is_empty() {
                    return Err(Error::config("pool is empty"));
                }
                for entry in pool {
                    entry.hyper.validate()?;
                }
                Ok(())
            }
            (None, Some(prior)) => prior.validate(),
        }
    }

    /// The pool as run: explicit entries, or a draw from the prior keyed by
    /// the seed.
    pub fn agents(&self) -> Result<Vec<AgentSpec>> {
        self.validate()?;
        let hypers: Vec<(Option<u32>, HyperParams)> = match (&self.pool, &self.prior) {
            (Some(pool), _) => pool.iter().map(|e| (e.id, e.hyper.clone())).collect(),
            (None, Some(prior)) => {
                let mut rng = seeding::stream(self.seed, &[tag::POOL]);
                sample_pool(prior, &mut rng)?
                    .into_iter()
                    .map(|h| (None, h))
                    .collect()
            }
            (None, None) => unreachable!("validate rejects a config without a pool"),
        };
        Ok(hypers
            .into_iter()
            .enumerate()
            .map(|(i, (id, hyper))| AgentSpec {
                id: id.unwrap_or(i as u32),
                hyper,
            })
            .collect())
    }

    /// Explicit pool with ids, no prior, `pbt` filled in for PBT mode.
    pub fn resolved(&self) -> Result<Self> {
        let agents = self.agents()?;
        let mut out = self.clone();
        out.pool = Some(
            agents
                .into_iter()
                .map(|a| PoolEntry {
                    id: Some(a.id),
                    hyper: a.hyper,
                })
                .collect(),
        );
        out.prior = None;
        if out.mode == Mode::AbpsPbt && out.pbt.is_none() {
            out.pbt = Some(PbtConfig::default());
        }
        Ok(out)
    }
}
