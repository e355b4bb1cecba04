//! Random pools: a categorical choice of architecture, jittered layer
//! widths and log-uniform learning rate and ε-decay.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::learner::HyperParams;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureChoice {
    pub name: String,
    pub hidden_sizes: Vec<usize>,
    pub probability: f64,
}

impl ArchitectureChoice {
    fn new(name: &str, hidden_sizes: &[usize], probability: f64) -> Self {
        ArchitectureChoice {
            name: name.into(),
            hidden_sizes: hidden_sizes.to_vec(),
            probability,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolPrior {
    #[serde(default = "default_architectures")]
    pub architecture_choices: Vec<ArchitectureChoice>,
    /// Each hidden width is scaled by a uniform draw from this range.
    #[serde(default = "default_perturbation")]
    pub size_perturbation_range: [f64; 2],
    #[serde(default = "default_lr_range")]
    pub learning_rate_range: [f64; 2],
    #[serde(default = "default_decay_range")]
    pub epsilon_decay_range: [u64; 2],
    #[serde(alias = "K")]
    pub k: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_target_sync")]
    pub target_sync_period: u64,
    #[serde(default = "default_epsilon_final")]
    pub epsilon_final: f64,
}

fn default_architectures() -> Vec<ArchitectureChoice> {
    vec![
        ArchitectureChoice::new("normal", &[64], 0.2),
        ArchitectureChoice::new("wide", &[256], 0.2),
        ArchitectureChoice::new("deep", &[64, 64, 64], 0.2),
        ArchitectureChoice::new("small", &[8], 0.4),
    ]
}
fn default_perturbation() -> [f64; 2] {
    [0.9, 1.1]
}
fn default_lr_range() -> [f64; 2] {
    [1e-5, 5e-3]
}
fn default_decay_range() -> [u64; 2] {
    [250_000, 4_000_000]
}
fn default_discount() -> f64 {
    HyperParams::default().discount
}
fn default_target_sync() -> u64 {
    HyperParams::default().target_sync_period
}
fn default_epsilon_final() -> f64 {
    HyperParams::default().epsilon_final
}

impl PoolPrior {
    pub fn new(k: usize) -> Self {
        PoolPrior {
            architecture_choices: default_architectures(),
            size_perturbation_range: default_perturbation(),
            learning_rate_range: default_lr_range(),
            epsilon_decay_range: default_decay_range(),
            k,
            discount: default_discount(),
            target_sync_period: default_target_sync(),
            epsilon_final: default_epsilon_final(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("prior pool size K must be positive"));
        }
        if self.architecture_choices.is_empty() {
            return Err(Error::config("prior needs at least one architecture"));
        }
        for a in &self.architecture_choices {
            if a.hidden_sizes.is_empty() || a.hidden_sizes.contains(&0) {
                return Err(Error::config(format!(
                    "architecture {:?} has empty or zero-width layers",
                    a.name
                )));
            }
            if !(a.probability >= 0.0 && a.probability.is_finite()) {
                return Err(Error::config(format!(
                    "architecture {:?} has a bad probability",
                    a.name
                )));
            }
        }
        let total: f64 = self
            .architecture_choices
            .iter()
            .map(|a| a.probability)
            .sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "architecture probabilities sum to {total}, not 1"
            )));
        }
        let [lo, hi] = self.size_perturbation_range;
        if !(0.0 < lo && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                "size_perturbation_range must be positive and ordered",
            ));
        }
        let [lo, hi] = self.learning_rate_range;
        if !(0.0 < lo && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                "learning_rate_range must be positive and ordered",
            ));
        }
        let [lo, hi] = self.epsilon_decay_range;
        if !(0 < lo && lo <= hi) {
            return Err(Error::config(
                "epsilon_decay_range must be positive and ordered",
            ));
        }
        Ok(())
    }
}

/// `exp(U(ln lo, ln hi))`.
pub fn log_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo.ln()..hi.ln()).exp().clamp(lo, hi)
}

fn pick_architecture<'a, R: Rng + ?Sized>(
    choices: &'a [ArchitectureChoice],
    rng: &mut R,
) -> &'a ArchitectureChoice {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for c in choices {
        acc += c.probability;
        if u < acc {
            return c;
        }
    }
    // Rounding left a sliver above the last cumulative bound.
    choices
        .iter()
        .rev()
        .find(|c| c.probability > 0.0)
        .unwrap_or(&choices[0])
}

/// `K` independent draws from the prior.
pub fn sample_pool<R: Rng + ?Sized>(prior: &PoolPrior, rng: &mut R) -> Result<Vec<HyperParams>> {
    prior.validate()?;
    let [plo, phi] = prior.size_perturbation_range;
    let [llo, lhi] = prior.learning_rate_range;
    let [dlo, dhi] = prior.epsilon_decay_range;
    let pool = (0..prior.k)
        .map(|_| {
            let arch = pick_architecture(&prior.architecture_choices, rng);
            let hidden_sizes = arch
                .hidden_sizes
                .iter()
                .map(|&h| {
                    let f = if plo == phi {
                        plo
                    } else {
                        rng.gen_range(plo..=phi)
                    };
                    ((h as f64 * f).round() as usize).max(1)
                })
                .collect();
            let learning_rate = log_uniform(llo, lhi, rng);
            let decay = log_uniform(dlo as f64, dhi as f64, rng).round() as u64;
            HyperParams {
                architecture: Some(arch.name.clone()),
                hidden_sizes,
                learning_rate,
                epsilon_decay_steps: decay.clamp(dlo, dhi),
                discount: prior.discount,
                target_sync_period: prior.target_sync_period,
                epsilon_final: prior.epsilon_final,
                ..HyperParams::default()
            }
        })
        .collect();
    Ok(pool)
}
