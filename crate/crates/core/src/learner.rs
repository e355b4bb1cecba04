//! A DQN-style learner: online and target Q-networks, Adam, and an
//! ε-greedy behavior policy whose ε anneals linearly with the number of
//! actions the learner has taken.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::nn::{Adam, QNetwork, RegressionSample, WeightSnapshot};
use crate::replay::Transition;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Architecture label ("normal", "small", ...); informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<String>,
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epsilon_decay_steps: u64,
    #[serde(default = "default_epsilon_start")]
    pub epsilon_start: f64,
    #[serde(default = "default_epsilon_final")]
    pub epsilon_final: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_target_sync")]
    pub target_sync_period: u64,
}

fn default_epsilon_start() -> f64 {
    1.0
}
fn default_epsilon_final() -> f64 {
    0.01
}
fn default_discount() -> f64 {
    0.99
}
fn default_target_sync() -> u64 {
    500
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            architecture: Some("normal".into()),
            hidden_sizes: vec![64],
            learning_rate: 1e-3,
            epsilon_decay_steps: 10_000,
            epsilon_start: default_epsilon_start(),
            epsilon_final: default_epsilon_final(),
            discount: default_discount(),
            target_sync_period: default_target_sync(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden_sizes must be non-empty and positive"));
        }
        // Zero is allowed: it freezes the weights.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate must be finite and non-negative",
            ));
        }
        if self.epsilon_decay_steps == 0 {
            return Err(Error::config("epsilon_decay_steps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..1.0).contains(&self.epsilon_final) {
            return Err(Error::config(
                "epsilon_start in [0, 1], epsilon_final in [0, 1) required",
            ));
        }
        if self.epsilon_final > self.epsilon_start {
            return Err(Error::config("epsilon_final must not exceed epsilon_start"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config("discount must lie in [0, 1)"));
        }
        if self.target_sync_period == 0 {
            return Err(Error::config("target_sync_period must be positive"));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct Learner {
    online: QNetwork,
    target: QNetwork,
    hyper: HyperParams,
    optimizer: Adam,
    train_step_count: u64,
    act_step_count: u64,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(
        hyper: HyperParams,
        observation_len: usize,
        action_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        let online = QNetwork::new(observation_len, &hyper.hidden_sizes, action_count, rng)?;
        Ok(Self::from_network(hyper, online))
    }

    /// A learner whose online and target networks both start at `online`.
    pub fn from_network(hyper: HyperParams, online: QNetwork) -> Self {
        Learner {
            optimizer: Adam::new(online.param_count()),
            target: online.clone(),
            online,
            hyper,
            train_step_count: 0,
            act_step_count: 0,
        }
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    /// Replaces the optimization hyper-parameters. The architecture is fixed
    /// by the weights and must not change.
    pub fn set_hyper(&mut self, hyper: HyperParams) -> Result<()> {
        hyper.validate()?;
        if hyper.hidden_sizes != self.hyper.hidden_sizes {
            return Err(Error::ShapeMismatch {
                expected: format!("hidden sizes {:?}", self.hyper.hidden_sizes),
                actual: format!("{:?}", hyper.hidden_sizes),
            });
        }
        self.hyper = hyper;
        Ok(())
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn train_step_count(&self) -> u64 {
        self.train_step_count
    }

    pub fn act_step_count(&self) -> u64 {
        self.act_step_count
    }

    pub fn set_act_step_count(&mut self, count: u64) {
        self.act_step_count = count;
    }

    pub fn current_epsilon(&self) -> f64 {
        let h = &self.hyper;
        if self.act_step_count >= h.epsilon_decay_steps {
            return h.epsilon_final;
        }
        let progress = self.act_step_count as f64 / h.epsilon_decay_steps as f64;
        h.epsilon_start + (h.epsilon_final - h.epsilon_start) * progress
    }

    pub fn q_values(&self, observation: &Observation) -> Result<Vec<f64>> {
        self.online.forward(&observation.features)
    }

    pub fn greedy_action(&self, observation: &Observation) -> Result<usize> {
        Ok(argmax(&self.q_values(observation)?))
    }

    /// ε-greedy action. Always draws one uniform for the coin and, on
    /// exploration, one more for the action.
    pub fn act<R: Rng + ?Sized>(
        &mut self,
        observation: &Observation,
        rng: &mut R,
    ) -> Result<usize> {
        let epsilon = self.current_epsilon();
        self.act_step_count += 1;
        if rng.gen::<f64>() < epsilon {
            Ok(rng.gen_range(0..self.online.output_len()))
        } else {
            self.greedy_action(observation)
        }
    }

    /// TD targets `r + γ max_a target(s', a)`, or `r` at terminals.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                if t.done {
                    Ok(t.r)
                } else {
                    let next = self.target.forward(&t.s_next.features)?;
                    let best = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    Ok(t.r + self.hyper.discount * best)
                }
            })
            .collect()
    }

    /// One Adam step on the mean squared TD error; returns the loss before
    /// the step. Syncs the target network every `target_sync_period` steps.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::config("train_step needs a non-empty batch"));
        }
        let targets = self.td_targets(batch)?;
        let samples: Vec<RegressionSample<'_>> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &target)| RegressionSample {
                input: &t.s.features,
                action: t.a,
                target,
            })
            .collect();
        let (loss, grad) = self.online.loss_and_gradient(&samples)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                loss,
                train_step: self.train_step_count,
            });
        }
        self.optimizer
            .step(&mut self.online, &grad, self.hyper.learning_rate);
        self.train_step_count += 1;
        if self
            .train_step_count
            .is_multiple_of(self.hyper.target_sync_period)
        {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    pub fn clone_weights(&self) -> WeightSnapshot {
        self.online.snapshot()
    }

    /// Loads `snapshot` into both networks and restarts the optimizer.
    pub fn load_weights(&mut self, snapshot: &WeightSnapshot) -> Result<()> {
        self.online.load_snapshot(snapshot)?;
        self.target = self.online.clone();
        self.optimizer = Adam::new(self.online.param_count());
        Ok(())
    }

    /// Takes over another learner's hyper-parameters and weights, which may
    /// have a different architecture. Step counters are kept.
    pub fn adopt(&mut self, hyper: HyperParams, snapshot: &WeightSnapshot) -> Result<()> {
        hyper.validate()?;
        let net = QNetwork::from_snapshot(snapshot)?;
        let sizes = net.layer_sizes();
        if sizes[1..sizes.len() - 1] != hyper.hidden_sizes[..]
            || sizes[0] != self.online.input_len()
            || sizes[sizes.len() - 1] != self.online.output_len()
        {
            return Err(Error::ShapeMismatch {
                expected: format!("hidden sizes {:?}", hyper.hidden_sizes),
                actual: format!("snapshot layers {sizes:?}"),
            });
        }
        self.optimizer = Adam::new(net.param_count());
        self.target = net.clone();
        self.online = net;
        self.hyper = hyper;
        Ok(())
    }
}
