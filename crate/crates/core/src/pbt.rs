//! Population based training on top of the ABPS loop.
//!
//! Every `pbt_period_multiplier` selection rounds the pool is re-ranked by
//! the bandit's arm values instead of by fresh evaluations. Arms whose value
//! has not been refreshed for more than `staleness_threshold` rounds are
//! re-evaluated first. Learners in the bottom `truncation_fraction` then copy
//! the weights, hyper-parameters and arm statistics of a random learner from
//! the top fraction (exploit), and the copied hyper-parameters are perturbed
//! (explore). The ranking is computed once per PBT round, before any copy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::abps::{online_evaluation, AbpsRun, AgentSlot};
use crate::bandit::BanditState;
use crate::env::{EnvSpec, Environment};
use crate::learner::HyperParams;
use crate::seeding::{self, tag, StreamRng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutableKey {
    LearningRate,
    EpsilonDecaySteps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbtConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// PBT period in ABPS selection rounds.
    #[serde(default = "default_multiplier")]
    pub pbt_period_multiplier: u64,
    #[serde(default = "default_truncation")]
    pub truncation_fraction: f64,
    /// In selection rounds; defaults to twice the multiplier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staleness_threshold: Option<u64>,
    #[serde(default = "default_perturb")]
    pub perturb_factors: [f64; 2],
    #[serde(default = "default_mutable")]
    pub mutable_keys: Vec<MutableKey>,
    /// Explore clamps the learning rate into this range.
    #[serde(default = "default_lr_range")]
    pub learning_rate_range: [f64; 2],
    /// Explore clamps the ε decay period into this range.
    #[serde(default = "default_decay_range")]
    pub epsilon_decay_range: [f64; 2],
    /// Episodes per staleness-triggered evaluation.
    #[serde(default = "default_stale_episodes")]
    pub stale_eval_episodes: u32,
}

fn yes() -> bool {
    true
}
fn default_multiplier() -> u64 {
    4
}
fn default_truncation() -> f64 {
    0.25
}
fn default_perturb() -> [f64; 2] {
    [0.8, 1.2]
}
fn default_mutable() -> Vec<MutableKey> {
    vec![MutableKey::LearningRate, MutableKey::EpsilonDecaySteps]
}
fn default_lr_range() -> [f64; 2] {
    [1e-5, 5e-3]
}
fn default_decay_range() -> [f64; 2] {
    [2.5e5, 4e6]
}
fn default_stale_episodes() -> u32 {
    5
}

impl Default for PbtConfig {
    fn default() -> Self {
        PbtConfig {
            enabled: true,
            pbt_period_multiplier: default_multiplier(),
            truncation_fraction: default_truncation(),
            staleness_threshold: None,
            perturb_factors: default_perturb(),
            mutable_keys: default_mutable(),
            learning_rate_range: default_lr_range(),
            epsilon_decay_range: default_decay_range(),
            stale_eval_episodes: default_stale_episodes(),
        }
    }
}

impl PbtConfig {
    pub fn staleness_threshold(&self) -> u64 {
        self.staleness_threshold
            .unwrap_or(2 * self.pbt_period_multiplier)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pbt_period_multiplier == 0 {
            return Err(Error::config("pbt_period_multiplier must be at least 1"));
        }
        if !(self.truncation_fraction > 0.0 && self.truncation_fraction <= 0.5) {
            return Err(Error::config("truncation_fraction must lie in (0, 0.5]"));
        }
        if self
            .perturb_factors
            .iter()
            .any(|f| !(*f > 0.0 && f.is_finite()))
        {
            return Err(Error::config("perturb_factors must be positive"));
        }
        for [lo, hi] in [self.learning_rate_range, self.epsilon_decay_range] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config("clamp ranges must be positive and ordered"));
            }
        }
        if self.stale_eval_episodes == 0 {
            return Err(Error::config("stale_eval_episodes must be positive"));
        }
        Ok(())
    }
}

/// True on every positive multiple of the PBT period.
pub fn pbt_ready(selection_round: u64, config: &PbtConfig) -> bool {
    selection_round > 0 && selection_round.is_multiple_of(config.pbt_period_multiplier)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PbtAction {
    Exploit,
    Explore,
    StaleEval,
}

impl PbtAction {
    pub fn as_str(self) -> &'static str {
        match self {
            PbtAction::Exploit => "exploit",
            PbtAction::Explore => "explore",
            PbtAction::StaleEval => "stale-eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PbtEvent {
    pub round: u64,
    /// Bandit time when the event happened.
    pub time: u64,
    pub agent_id: u32,
    pub arm: usize,
    pub action: PbtAction,
    pub src_agent: Option<u32>,
    pub src_arm: Option<usize>,
    pub old_learning_rate: f64,
    pub new_learning_rate: f64,
    pub old_epsilon_decay_steps: u64,
    pub new_epsilon_decay_steps: u64,
    /// Mean return of a staleness evaluation.
    pub eval_return: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PbtState {
    pub config: PbtConfig,
    pub(crate) rng: StreamRng,
    pub(crate) stale_env: Environment,
    pub(crate) stale_episode_counter: u64,
}

impl PbtState {
    pub fn new(config: PbtConfig, env: &EnvSpec, run_seed: u64) -> Result<Self> {
        Ok(PbtState {
            config,
            rng: seeding::stream(run_seed, &[tag::PBT]),
            stale_env: Environment::with_stream(env.clone(), &[run_seed, tag::STALE_EVAL_ENV])?,
            stale_episode_counter: 0,
        })
    }

    pub fn ready(&self, round: u64) -> bool {
        self.config.enabled && pbt_ready(round, &self.config)
    }

    pub fn rng(&self) -> &StreamRng {
        &self.rng
    }
}

/// Evaluates `slot` and overwrites its arm when the arm is stale. Returns
/// the evaluation when one ran.
pub fn refresh_if_stale(
    slot: &AgentSlot,
    bandit: &mut BanditState,
    now: u64,
    staleness_threshold: u64,
    env: &mut Environment,
    episodes: u32,
    first_episode_seed: u64,
) -> Result<Option<crate::abps::Evaluation>> {
    if !bandit.is_stale(slot.arm_index, now, staleness_threshold)? {
        return Ok(None);
    }
    let e = online_evaluation(&slot.learner, env, episodes, first_episode_seed)?;
    bandit.update(slot.arm_index, e.mean_return, now)?;
    Ok(Some(e))
}

/// Arms ordered best first by bandit mean; ties keep the lower index first.
pub fn rank_arms(bandit: &BanditState) -> Vec<usize> {
    let means = bandit.means();
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
    order
}

/// Size of the top and bottom groups; zero for pools smaller than two.
pub fn truncation_count(k: usize, fraction: f64) -> usize {
    if k < 2 {
        0
    } else {
        ((k as f64 * fraction).floor() as usize).clamp(1, k / 2)
    }
}

/// Exploit step against a fixed `ranking`. If `agent_index` is in the bottom
/// group, a uniform member of the top group is drawn; when its bandit mean is
/// strictly higher, the agent adopts its weights, hyper-parameters and arm
/// statistics. Returns the source index when a copy happened.
pub fn exploit_with_ranking<R: Rng + ?Sized>(
    agent_index: usize,
    pool: &mut [AgentSlot],
    bandit: &mut BanditState,
    ranking: &[usize],
    truncation_fraction: f64,
    rng: &mut R,
) -> Result<Option<usize>> {
    let k = pool.len();
    let n = truncation_count(k, truncation_fraction);
    let position = ranking
        .iter()
        .position(|&a| a == agent_index)
        .ok_or(Error::OutOfRange {
            index: agent_index,
            len: k,
        })?;
    if n == 0 || position < k - n {
        return Ok(None);
    }
    let src = ranking[rng.gen_range(0..n)];
    let means = bandit.means();
    if means[src] <= means[agent_index] {
        return Ok(None);
    }
    let snapshot = pool[src].learner.clone_weights();
    let hyper = pool[src].hyper().clone();
    pool[agent_index].learner.adopt(hyper, &snapshot)?;
    bandit.substitute_arm(pool[agent_index].arm_index, pool[src].arm_index)?;
    Ok(Some(src))
}

/// [`exploit_with_ranking`] with a ranking taken from the current bandit.
pub fn exploit<R: Rng + ?Sized>(
    agent_index: usize,
    pool: &mut [AgentSlot],
    bandit: &mut BanditState,
    truncation_fraction: f64,
    rng: &mut R,
) -> Result<bool> {
    let ranking = rank_arms(bandit);
    exploit_with_ranking(
        agent_index,
        pool,
        bandit,
        &ranking,
        truncation_fraction,
        rng,
    )
    .map(|src| src.is_some())
}

/// Multiplies each mutable key by one of the two perturb factors (fair coin)
/// and clamps into the configured range. The architecture is never touched.
pub fn explore<R: Rng + ?Sized>(
    hyper: &HyperParams,
    config: &PbtConfig,
    rng: &mut R,
) -> HyperParams {
    let mut out = hyper.clone();
    let [down, up] = config.perturb_factors;
    let mut keys = config.mutable_keys.clone();
    keys.sort();
    keys.dedup();
    for key in keys {
        let factor = if rng.gen::<bool>() { up } else { down };
        match key {
            MutableKey::LearningRate => {
                let [lo, hi] = config.learning_rate_range;
                out.learning_rate = (hyper.learning_rate * factor).clamp(lo, hi);
            }
            MutableKey::EpsilonDecaySteps => {
                let [lo, hi] = config.epsilon_decay_range;
                let v = (hyper.epsilon_decay_steps as f64 * factor)
                    .clamp(lo, hi)
                    .round();
                out.epsilon_decay_steps = (v as u64).max(1);
            }
        }
    }
    out
}

impl AbpsRun {
    /// Refresh stale arms, snapshot the ranking, then exploit and explore
    /// per agent in ascending pool order.
    pub(crate) fn pbt_round(&mut self) -> Result<()> {
        let AbpsRun {
            pool,
            bandit,
            pbt,
            log,
            round,
            ..
        } = self;
        let Some(state) = pbt.as_mut() else {
            return Ok(());
        };
        let now = bandit.time();
        let threshold = state.config.staleness_threshold();
        let episodes = state.config.stale_eval_episodes;
        for slot in pool.iter() {
            let first_seed = state.stale_episode_counter;
            let refreshed = refresh_if_stale(
                slot,
                bandit,
                now,
                threshold,
                &mut state.stale_env,
                episodes,
                first_seed,
            )?;
            if let Some(e) = refreshed {
                state.stale_episode_counter += episodes as u64;
                log.eval_env_steps += e.steps;
                let h = slot.hyper();
                log.pbt_events.push(PbtEvent {
                    round: *round,
                    time: now,
                    agent_id: slot.agent_id,
                    arm: slot.arm_index,
                    action: PbtAction::StaleEval,
                    src_agent: None,
                    src_arm: None,
                    old_learning_rate: h.learning_rate,
                    new_learning_rate: h.learning_rate,
                    old_epsilon_decay_steps: h.epsilon_decay_steps,
                    new_epsilon_decay_steps: h.epsilon_decay_steps,
                    eval_return: Some(e.mean_return),
                });
            }
        }

        let ranking = rank_arms(bandit);
        for i in 0..pool.len() {
            let before = pool[i].hyper().clone();
            let fraction = state.config.truncation_fraction;
            let Some(src) =
                exploit_with_ranking(i, pool, bandit, &ranking, fraction, &mut state.rng)?
            else {
                continue;
            };
            let copied = pool[i].hyper().clone();
            log.pbt_events.push(PbtEvent {
                round: *round,
                time: now,
                agent_id: pool[i].agent_id,
                arm: pool[i].arm_index,
                action: PbtAction::Exploit,
                src_agent: Some(pool[src].agent_id),
                src_arm: Some(pool[src].arm_index),
                old_learning_rate: before.learning_rate,
                new_learning_rate: copied.learning_rate,
                old_epsilon_decay_steps: before.epsilon_decay_steps,
                new_epsilon_decay_steps: copied.epsilon_decay_steps,
                eval_return: None,
            });
            let explored = explore(&copied, &state.config, &mut state.rng);
            pool[i].learner.set_hyper(explored.clone())?;
            log.pbt_events.push(PbtEvent {
                round: *round,
                time: now,
                agent_id: pool[i].agent_id,
                arm: pool[i].arm_index,
                action: PbtAction::Explore,
                src_agent: Some(pool[src].agent_id),
                src_arm: Some(pool[src].arm_index),
                old_learning_rate: copied.learning_rate,
                new_learning_rate: explored.learning_rate,
                old_epsilon_decay_steps: copied.epsilon_decay_steps,
                new_epsilon_decay_steps: explored.epsilon_decay_steps,
                eval_return: None,
            });
        }
        Ok(())
    }
}
