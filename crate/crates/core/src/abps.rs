//! The ABPS training loop.
//!
//! 1. Build the pool and evaluate every learner greedily; the mean returns
//!    initialize one bandit arm per learner.
//! 2. Repeat until the interaction budget is spent: the bandit picks a
//!    behavior learner, which acts ε-greedily for `m` episodes. Every
//!    transition goes into the shared buffer and, after each environment
//!    step, every learner in the pool takes one gradient step on its own
//!    batch. The mean return of the period is credited to the chosen arm.
//! 3. Every `eval_period` environment steps the whole pool is evaluated
//!    greedily on a separate environment instance.
//!
//! Only the behavior learner ever acts on the training environment, so the
//! pool consumes exactly `total_env_steps` interactions regardless of its size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{BanditMode, BanditState, Strategy};
use crate::env::{EnvSpec, Environment};
use crate::learner::{HyperParams, Learner};
use crate::pbt::{PbtAction, PbtConfig, PbtEvent, PbtState};
use crate::replay::{ReplayBuffer, Transition};
use crate::seeding::{self, tag, StreamRng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbpsConfig {
    /// Episodes per behavior period (`m`).
    #[serde(default = "default_m", alias = "m")]
    pub episodes_per_period: u32,
    /// Greedy episodes per learner for the initial bandit values (`n`).
    #[serde(default = "default_init_eval")]
    pub n_init_eval_episodes: u32,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: u32,
    /// Environment steps per evaluation epoch.
    #[serde(default = "default_eval_period")]
    pub eval_period: u64,
    pub total_env_steps: u64,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub bandit_mode: BanditMode,
    /// Buffer fill before any training; defaults to `max(batch_size, 100)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learn_start: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_capacity")]
    pub replay_capacity: usize,
    /// Train the pool's learners concurrently within each step. Each learner
    /// owns its RNG and the buffer is read-only meanwhile, so results match
    /// the sequential order exactly.
    #[serde(default)]
    pub parallel_learners: bool,
}

fn default_m() -> u32 {
    1
}
fn default_init_eval() -> u32 {
    5
}
fn default_eval_episodes() -> u32 {
    50
}
fn default_eval_period() -> u64 {
    2_000
}
fn default_strategy() -> Strategy {
    Strategy::ucb(2.0)
}
fn default_batch() -> usize {
    32
}
fn default_capacity() -> usize {
    50_000
}

impl AbpsConfig {
    pub fn new(total_env_steps: u64) -> Self {
        AbpsConfig {
            episodes_per_period: default_m(),
            n_init_eval_episodes: default_init_eval(),
            eval_episodes: default_eval_episodes(),
            eval_period: default_eval_period(),
            total_env_steps,
            strategy: default_strategy(),
            bandit_mode: BanditMode::default(),
            learn_start: None,
            batch_size: default_batch(),
            replay_capacity: default_capacity(),
            parallel_learners: false,
        }
    }

    pub fn learn_start(&self) -> usize {
        self.learn_start.unwrap_or_else(|| self.batch_size.max(100))
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_period == 0
            || self.n_init_eval_episodes == 0
            || self.eval_episodes == 0
            || self.eval_period == 0
            || self.batch_size == 0
            || self.replay_capacity == 0
        {
            return Err(Error::config(
                "episodes_per_period, n_init_eval_episodes, eval_episodes, eval_period, batch_size and replay_capacity must be positive",
            ));
        }
        self.strategy.validate()?;
        if let BanditMode::Sliding { window: 0 } = self.bandit_mode {
            return Err(Error::config("sliding window length must be positive"));
        }
        Ok(())
    }
}

/// A pool member as configured: stable id plus hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u32,
    #[serde(flatten)]
    pub hyper: HyperParams,
}

/// Pool specs with ids `0..K` in order.
pub fn pool_from_hypers(hypers: impl IntoIterator<Item = HyperParams>) -> Vec<AgentSpec> {
    hypers
        .into_iter()
        .enumerate()
        .map(|(i, hyper)| AgentSpec {
            id: i as u32,
            hyper,
        })
        .collect()
}

/// One learner in the pool with its private RNG streams.
#[derive(Clone, Debug)]
pub struct AgentSlot {
    pub agent_id: u32,
    pub arm_index: usize,
    pub learner: Learner,
    pub(crate) act_rng: StreamRng,
    pub(crate) batch_rng: StreamRng,
}

impl AgentSlot {
    /// Streams are keyed by `(run_seed, agent_id)`, never by pool position.
    pub fn new(spec: &AgentSpec, arm_index: usize, env: &EnvSpec, run_seed: u64) -> Result<Self> {
        let id = spec.id as u64;
        let mut init_rng = seeding::stream(run_seed, &[tag::WEIGHT_INIT, id]);
        let learner = Learner::new(
            spec.hyper.clone(),
            env.observation_len(),
            env.action_count(),
            &mut init_rng,
        )?;
        Ok(AgentSlot {
            agent_id: spec.id,
            arm_index,
            learner,
            act_rng: seeding::stream(run_seed, &[tag::ACT, id]),
            batch_rng: seeding::stream(run_seed, &[tag::BATCH, id]),
        })
    }

    pub fn hyper(&self) -> &HyperParams {
        self.learner.hyper()
    }

    pub fn act_rng(&self) -> &StreamRng {
        &self.act_rng
    }

    pub fn batch_rng(&self) -> &StreamRng {
        &self.batch_rng
    }
}

pub fn build_pool(pool: &[AgentSpec], env: &EnvSpec, run_seed: u64) -> Result<Vec<AgentSlot>> {
    if pool.is_empty() {
        return Err(Error::config("pool must contain at least one agent"));
    }
    let mut ids: Vec<u32> = pool.iter().map(|a| a.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("agent ids must be unique"));
    }
    pool.iter()
        .enumerate()
        .map(|(i, spec)| AgentSlot::new(spec, i, env, run_seed))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub steps: u64,
}

/// Greedy rollouts on `env`; episode `j` uses seed `first_episode_seed + j`.
/// Touches neither the learner's counters nor any buffer.
pub fn online_evaluation(
    learner: &Learner,
    env: &mut Environment,
    episodes: u32,
    first_episode_seed: u64,
) -> Result<Evaluation> {
    let mut total = 0.0;
    let mut steps = 0;
    for j in 0..episodes {
        let mut obs = env.reset(first_episode_seed + j as u64);
        loop {
            let action = learner.greedy_action(&obs)?;
            let result = env.step(action)?;
            steps += 1;
            total += result.reward;
            if result.done {
                break;
            }
            obs = result.observation;
        }
    }
    Ok(Evaluation {
        mean_return: total / episodes.max(1) as f64,
        steps,
    })
}

/// [`online_evaluation`] for every slot, in pool order.
pub fn initial_evaluation(
    pool: &[AgentSlot],
    env: &mut Environment,
    episodes: u32,
    first_episode_seed: u64,
) -> Result<(Vec<f64>, u64)> {
    let mut steps = 0;
    let returns = pool
        .iter()
        .map(|slot| {
            let e = online_evaluation(&slot.learner, env, episodes, first_episode_seed)?;
            steps += e.steps;
            Ok(e.mean_return)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((returns, steps))
}

/// One evaluation epoch: mean greedy return of each agent, in pool order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub epoch: usize,
    pub env_steps: u64,
    pub returns: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub round: u64,
    /// Bandit time of the selection.
    pub time: u64,
    pub arm: usize,
    pub agent_id: u32,
    /// Mean return over the period's completed episodes; `None` when the
    /// budget ran out before any episode finished (no bandit update then).
    pub period_reward: Option<f64>,
    pub episodes: u32,
    /// Training environment steps consumed at the end of the period.
    pub env_steps: u64,
    pub architecture: Option<String>,
    pub learning_rate: f64,
    pub epsilon_decay_steps: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub agent_ids: Vec<u32>,
    /// Row 0 is the initial evaluation.
    pub eval_rows: Vec<EvalRow>,
    pub selection_events: Vec<SelectionEvent>,
    pub pbt_events: Vec<PbtEvent>,
    /// Training interactions with the environment (behavior stream only).
    pub env_steps: u64,
    /// Interactions spent on evaluations, reported separately.
    pub eval_env_steps: u64,
    /// All training interactions across runs; differs from `env_steps` for
    /// the independent baseline.
    pub total_interactions: u64,
}

impl TrainingLog {
    pub fn final_returns(&self) -> Option<&[f64]> {
        self.eval_rows.last().map(|r| r.returns.as_slice())
    }

    /// Selection count per arm.
    pub fn selection_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.agent_ids.len()];
        for e in &self.selection_events {
            counts[e.arm] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodOutcome {
    pub episode_returns: Vec<f64>,
    pub steps: u64,
}

impl PeriodOutcome {
    pub fn mean_return(&self) -> Option<f64> {
        (!self.episode_returns.is_empty())
            .then(|| self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64)
    }
}

/// A training run in progress. [`AbpsRun::new`] performs the initial
/// evaluation; [`AbpsRun::run`] executes the remaining loop.
#[derive(Clone, Debug)]
pub struct AbpsRun {
    pub(crate) config: AbpsConfig,
    pub(crate) run_seed: u64,
    pub(crate) pool: Vec<AgentSlot>,
    pub(crate) bandit: BanditState,
    pub(crate) bandit_rng: StreamRng,
    pub(crate) buffer: ReplayBuffer,
    pub(crate) train_env: Environment,
    pub(crate) eval_env: Environment,
    pub(crate) episode_counter: u64,
    pub(crate) round: u64,
    pub(crate) log: TrainingLog,
    pub(crate) pbt: Option<PbtState>,
}

impl AbpsRun {
    pub fn new(
        config: AbpsConfig,
        pool: &[AgentSpec],
        env: &EnvSpec,
        run_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        let pool = build_pool(pool, env, run_seed)?;
        let train_env = Environment::with_stream(env.clone(), &[run_seed, tag::TRAIN_ENV])?;
        let mut eval_env = Environment::with_stream(env.clone(), &[run_seed, tag::EVAL_ENV])?;
        let (initial, steps) = initial_evaluation(
            &pool,
            &mut eval_env,
            config.n_init_eval_episodes,
            eval_seed(0, 0),
        )?;
        let bandit = BanditState::init(pool.len(), &initial, config.bandit_mode)?;
        let log = TrainingLog {
            agent_ids: pool.iter().map(|s| s.agent_id).collect(),
            eval_rows: vec![EvalRow {
                epoch: 0,
                env_steps: 0,
                returns: initial,
            }],
            eval_env_steps: steps,
            ..TrainingLog::default()
        };
        Ok(AbpsRun {
            buffer: ReplayBuffer::new(config.replay_capacity)?,
            bandit_rng: seeding::stream(run_seed, &[tag::BANDIT]),
            config,
            run_seed,
            pool,
            bandit,
            train_env,
            eval_env,
            episode_counter: 0,
            round: 0,
            log,
            pbt: None,
        })
    }

    pub fn with_pbt(mut self, pbt: PbtConfig) -> Result<Self> {
        pbt.validate()?;
        self.pbt = Some(PbtState::new(pbt, self.train_env.spec(), self.run_seed)?);
        Ok(self)
    }

    pub fn config(&self) -> &AbpsConfig {
        &self.config
    }

    pub fn pool(&self) -> &[AgentSlot] {
        &self.pool
    }

    /// For experiments that inject weights or hyper-parameters mid-run.
    pub fn pool_mut(&mut self) -> &mut [AgentSlot] {
        &mut self.pool
    }

    pub fn bandit(&self) -> &BanditState {
        &self.bandit
    }

    pub fn bandit_mut(&mut self) -> &mut BanditState {
        &mut self.bandit
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn run_seed(&self) -> u64 {
        self.run_seed
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn env_steps(&self) -> u64 {
        self.log.env_steps
    }

    pub fn budget_left(&self) -> bool {
        self.log.env_steps < self.config.total_env_steps
    }

    pub fn bandit_rng(&self) -> &StreamRng {
        &self.bandit_rng
    }

    pub fn run(mut self) -> Result<TrainingLog> {
        self.run_to_end()?;
        Ok(self.into_log())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        while self.step_round()? {}
        self.finish()
    }

    /// Final evaluation when the budget did not end on an epoch boundary.
    pub fn finish(&mut self) -> Result<()> {
        let last = self.log.eval_rows.last().map_or(0, |r| r.env_steps);
        if self.log.env_steps > 0 && last != self.log.env_steps {
            self.evaluate_pool()?;
        }
        Ok(())
    }

    pub fn into_log(mut self) -> TrainingLog {
        self.log.total_interactions = self.log.env_steps;
        self.log
    }

    /// One selection round: select, run the period, update the arm and run
    /// PBT if due. Returns `false` once the budget is spent.
    pub fn step_round(&mut self) -> Result<bool> {
        if !self.budget_left() {
            return Ok(false);
        }
        self.round += 1;
        let arm = self
            .bandit
            .select(&self.config.strategy, &mut self.bandit_rng);
        let now = self.bandit.time();
        let outcome = self.run_period(arm).map_err(|e| self.context(arm, e))?;
        let period_reward = outcome.mean_return();
        if let Some(r) = period_reward {
            self.bandit.update(arm, r, now)?;
        }
        let hyper = self.pool[arm].hyper();
        self.log.selection_events.push(SelectionEvent {
            round: self.round,
            time: now,
            arm,
            agent_id: self.pool[arm].agent_id,
            period_reward,
            episodes: outcome.episode_returns.len() as u32,
            env_steps: self.log.env_steps,
            architecture: hyper.architecture.clone(),
            learning_rate: hyper.learning_rate,
            epsilon_decay_steps: hyper.epsilon_decay_steps,
        });
        if self.pbt.as_ref().is_some_and(|p| p.ready(self.round)) {
            self.pbt_round().map_err(|e| self.context(arm, e))?;
        }
        Ok(true)
    }

    fn context(&self, arm: usize, err: Error) -> Error {
        Error::Training {
            epoch: self.log.eval_rows.len(),
            arm,
            step: self.log.env_steps,
            source: Box::new(err),
        }
    }

    /// Runs up to `m` episodes with `behavior_arm` acting, training the whole
    /// pool after every step. Stops early when the budget runs out; the
    /// unfinished episode then does not count towards the period reward.
    pub fn run_period(&mut self, behavior_arm: usize) -> Result<PeriodOutcome> {
        if behavior_arm >= self.pool.len() {
            return Err(Error::OutOfRange {
                index: behavior_arm,
                len: self.pool.len(),
            });
        }
        let mut outcome = PeriodOutcome {
            episode_returns: Vec::new(),
            steps: 0,
        };
        for _ in 0..self.config.episodes_per_period {
            if !self.budget_left() {
                break;
            }
            let mut obs = self.train_env.reset(self.episode_counter);
            self.episode_counter += 1;
            let mut episode_return = 0.0;
            loop {
                let slot = &mut self.pool[behavior_arm];
                let action = slot.learner.act(&obs, &mut slot.act_rng)?;
                let result = self.train_env.step(action)?;
                self.buffer.push(Transition {
                    s: obs,
                    a: action,
                    r: result.reward,
                    s_next: result.observation.clone(),
                    done: result.terminal(),
                });
                self.log.env_steps += 1;
                outcome.steps += 1;
                episode_return += result.reward;
                self.train_pool()?;
                if self.log.env_steps.is_multiple_of(self.config.eval_period) {
                    self.evaluate_pool()?;
                }
                if result.done {
                    outcome.episode_returns.push(episode_return);
                    break;
                }
                if !self.budget_left() {
                    return Ok(outcome);
                }
                obs = result.observation;
            }
        }
        Ok(outcome)
    }

    /// One gradient step per learner, each on its own batch.
    fn train_pool(&mut self) -> Result<()> {
        if self.buffer.len() < self.config.learn_start() {
            return Ok(());
        }
        let buffer = &self.buffer;
        let batch_size = self.config.batch_size;
        let train = |slot: &mut AgentSlot| -> Result<()> {
            let batch = buffer.sample(batch_size, &mut slot.batch_rng)?;
            slot.learner.train_step(&batch).map(|_| ())
        };
        if self.config.parallel_learners {
            self.pool.par_iter_mut().try_for_each(train)
        } else {
            self.pool.iter_mut().try_for_each(train)
        }
    }

    /// Appends one evaluation row for the whole pool.
    pub fn evaluate_pool(&mut self) -> Result<()> {
        let epoch = self.log.eval_rows.len();
        let mut returns = Vec::with_capacity(self.pool.len());
        for slot in &self.pool {
            let e = online_evaluation(
                &slot.learner,
                &mut self.eval_env,
                self.config.eval_episodes,
                eval_seed(epoch, 0),
            )?;
            self.log.eval_env_steps += e.steps;
            returns.push(e.mean_return);
        }
        self.log.eval_rows.push(EvalRow {
            epoch,
            env_steps: self.log.env_steps,
            returns,
        });
        Ok(())
    }
}

/// Episode seed for evaluation episode `j` of epoch `epoch`; shared by all
/// agents so they face the same episodes.
pub(crate) fn eval_seed(epoch: usize, j: u64) -> u64 {
    ((epoch as u64) << 32) | j
}

pub fn run_abps(
    config: &AbpsConfig,
    pool: &[AgentSpec],
    env: &EnvSpec,
    run_seed: u64,
) -> Result<TrainingLog> {
    AbpsRun::new(config.clone(), pool, env, run_seed)?.run()
}

/// Replays the bandit from the log and checks that every recorded selection
/// is what the configured strategy picks from the recorded state.
pub fn audit_selections(log: &TrainingLog, config: &AbpsConfig, run_seed: u64) -> Result<()> {
    let initial = log
        .eval_rows
        .first()
        .ok_or_else(|| Error::config("log has no initial evaluation"))?;
    let mut bandit = BanditState::init(log.agent_ids.len(), &initial.returns, config.bandit_mode)?;
    let mut rng = seeding::stream(run_seed, &[tag::BANDIT]);
    let mut pbt = log.pbt_events.iter().peekable();
    for event in &log.selection_events {
        let arm = bandit.select(&config.strategy, &mut rng);
        if arm != event.arm || bandit.time() != event.time {
            return Err(Error::config(format!(
                "round {}: replay selected arm {arm} at t={}, log says arm {} at t={}",
                event.round,
                bandit.time(),
                event.arm,
                event.time
            )));
        }
        if let Some(r) = event.period_reward {
            bandit.update(arm, r, event.time)?;
        }
        while let Some(p) = pbt.next_if(|p| p.round == event.round) {
            match p.action {
                PbtAction::StaleEval => {
                    let value = p
                        .eval_return
                        .ok_or_else(|| Error::config("stale-eval without value"))?;
                    bandit.update(p.arm, value, p.time)?;
                }
                PbtAction::Exploit => {
                    let src = p
                        .src_arm
                        .ok_or_else(|| Error::config("exploit without source"))?;
                    bandit.substitute_arm(p.arm, src)?;
                }
                PbtAction::Explore => {}
            }
        }
    }
    Ok(())
}
