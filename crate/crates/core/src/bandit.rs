//! The behavior-selection bandit: one arm per learner in the pool.
//!
//! Arms are credited with the mean episode return of the periods during
//! which their learner was the behavior policy. Two bookkeeping modes exist:
//! `cumulative` keeps the running mean of every reward ever received, and
//! `sliding` keeps only rewards received within the last `window`
//! selections, recomputing mean and pull count from those alone so that the
//! values track learners whose quality drifts as they train.
//!
//! Time `t` counts selections. Initialization with one reward per arm
//! stamps arm `i` at time `i + 1` and leaves `t = K`, so the first
//! [`BanditState::select`] happens at `t = K + 1`.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::learner::argmax;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BanditMode {
    Cumulative,
    Sliding { window: u64 },
}

impl Default for BanditMode {
    fn default() -> Self {
        BanditMode::Sliding { window: 25 }
    }
}

/// Which `t` enters the UCB bonus in sliding mode. Cumulative mode always
/// uses the global selection count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UcbHorizon {
    /// Global selection count.
    #[default]
    Global,
    /// `min(t, window)`.
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Strategy {
    Random,
    Ucb {
        #[serde(default = "default_xi")]
        xi: f64,
        #[serde(default)]
        horizon: UcbHorizon,
    },
    EpsilonGreedy {
        #[serde(default = "default_bandit_epsilon")]
        epsilon: f64,
    },
    Softmax {
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
}

fn default_xi() -> f64 {
    2.0
}
fn default_bandit_epsilon() -> f64 {
    0.1
}
fn default_temperature() -> f64 {
    1.0
}

impl Strategy {
    pub fn ucb(xi: f64) -> Self {
        Strategy::Ucb {
            xi,
            horizon: UcbHorizon::Global,
        }
    }

    pub fn epsilon_greedy(epsilon: f64) -> Self {
        Strategy::EpsilonGreedy { epsilon }
    }

    pub fn softmax(temperature: f64) -> Self {
        Strategy::Softmax { temperature }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Ucb { .. } => "ucb",
            Strategy::EpsilonGreedy { .. } => "epsilon-greedy",
            Strategy::Softmax { .. } => "softmax",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Random => Ok(()),
            Strategy::Ucb { xi, .. } if xi > 0.0 && xi.is_finite() => Ok(()),
            Strategy::Ucb { .. } => Err(Error::config("ucb xi must be positive")),
            Strategy::EpsilonGreedy { epsilon } if (0.0..=1.0).contains(&epsilon) => Ok(()),
            Strategy::EpsilonGreedy { .. } => {
                Err(Error::config("bandit epsilon must lie in [0, 1]"))
            }
            Strategy::Softmax { temperature } if temperature > 0.0 && temperature.is_finite() => {
                Ok(())
            }
            Strategy::Softmax { .. } => Err(Error::config("softmax temperature must be positive")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub mean: f64,
    pub pulls: u64,
    /// `(update_time, reward)`, oldest first. Empty in cumulative mode.
    pub window: VecDeque<(u64, f64)>,
    pub last_update_time: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    arms: Vec<ArmState>,
    time: u64,
    mode: BanditMode,
}

impl BanditState {
    /// `k` arms with no observations yet.
    pub fn new(k: usize, mode: BanditMode) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("bandit needs at least one arm"));
        }
        if let BanditMode::Sliding { window: 0 } = mode {
            return Err(Error::config("sliding window length must be positive"));
        }
        Ok(BanditState {
            arms: vec![ArmState::default(); k],
            time: 0,
            mode,
        })
    }

    /// One initial reward per arm; arm `i` is credited at time `i + 1`.
    pub fn init(k: usize, initial_rewards: &[f64], mode: BanditMode) -> Result<Self> {
        if initial_rewards.len() != k {
            return Err(Error::ShapeMismatch {
                expected: format!("{k} initial rewards"),
                actual: format!("{}", initial_rewards.len()),
            });
        }
        let mut state = Self::new(k, mode)?;
        for (arm, &r) in initial_rewards.iter().enumerate() {
            state.time += 1;
            let now = state.time;
            state.update(arm, r, now)?;
        }
        Ok(state)
    }

    pub fn k(&self) -> usize {
        self.arms.len()
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn mode(&self) -> BanditMode {
        self.mode
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    pub fn arm(&self, arm: usize) -> Result<&ArmState> {
        self.arms.get(arm).ok_or(Error::OutOfRange {
            index: arm,
            len: self.arms.len(),
        })
    }

    pub fn means(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.mean).collect()
    }

    pub fn pulls(&self) -> Vec<u64> {
        self.arms.iter().map(|a| a.pulls).collect()
    }

    /// Advances time by one and picks an arm.
    pub fn select<R: Rng + ?Sized>(&mut self, strategy: &Strategy, rng: &mut R) -> usize {
        self.time += 1;
        let k = self.arms.len();
        match *strategy {
            Strategy::Random => rng.gen_range(0..k),
            Strategy::Ucb { xi, horizon } => {
                if let Some(unpulled) = self.arms.iter().position(|a| a.pulls == 0) {
                    return unpulled;
                }
                let t = match (self.mode, horizon) {
                    (BanditMode::Sliding { window }, UcbHorizon::Window) => self.time.min(window),
                    _ => self.time,
                };
                argmax(&self.ucb_indices(xi, t))
            }
            Strategy::EpsilonGreedy { epsilon } => {
                if rng.gen::<f64>() < epsilon {
                    rng.gen_range(0..k)
                } else {
                    argmax(&self.means())
                }
            }
            Strategy::Softmax { temperature } => {
                let probs = self.softmax_probabilities(temperature);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i;
                    }
                }
                // Rounding left `acc` just below 1; fall back to the last
                // arm with non-zero mass.
                probs.iter().rposition(|&p| p > 0.0).unwrap_or(k - 1)
            }
        }
    }

    /// `mean_i + sqrt(xi * ln t / pulls_i)` for every arm.
    pub fn ucb_indices(&self, xi: f64, t: u64) -> Vec<f64> {
        let log_t = (t as f64).ln();
        self.arms
            .iter()
            .map(|a| a.mean + (xi * log_t / a.pulls as f64).sqrt())
            .collect()
    }

    /// `p_i ∝ exp((mean_i - max_j mean_j) / temperature)`.
    pub fn softmax_probabilities(&self, temperature: f64) -> Vec<f64> {
        let max = self
            .arms
            .iter()
            .map(|a| a.mean)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self
            .arms
            .iter()
            .map(|a| ((a.mean - max) / temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    /// Credits `reward` (a period's mean episode return) to `arm` at time `now`.
    pub fn update(&mut self, arm: usize, reward: f64, now: u64) -> Result<()> {
        let len = self.arms.len();
        let mode = self.mode;
        let state = self
            .arms
            .get_mut(arm)
            .ok_or(Error::OutOfRange { index: arm, len })?;
        match mode {
            BanditMode::Cumulative => {
                let n = state.pulls as f64;
                state.mean = (n * state.mean + reward) / (n + 1.0);
                state.pulls += 1;
            }
            BanditMode::Sliding { window } => {
                state.window.push_back((now, reward));
                while let Some(&(t, _)) = state.window.front() {
                    if now.saturating_sub(t) >= window {
                        state.window.pop_front();
                    } else {
                        break;
                    }
                }
                state.pulls = state.window.len() as u64;
                state.mean = state.window.iter().map(|&(_, r)| r).sum::<f64>() / state.pulls as f64;
            }
        }
        state.last_update_time = now;
        Ok(())
    }

    /// Copies every statistic of `src` onto `dst`.
    pub fn substitute_arm(&mut self, dst: usize, src: usize) -> Result<()> {
        let len = self.arms.len();
        if dst >= len || src >= len {
            return Err(Error::OutOfRange {
                index: dst.max(src),
                len,
            });
        }
        if dst != src {
            self.arms[dst] = self.arms[src].clone();
        }
        Ok(())
    }

    /// `now - last_update_time > threshold`.
    pub fn is_stale(&self, arm: usize, now: u64, threshold: u64) -> Result<bool> {
        Ok(now.saturating_sub(self.arm(arm)?.last_update_time) > threshold)
    }
}
