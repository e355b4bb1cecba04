//! Episodic tabular environments and their value-iteration oracle.
//!
//! Three kinds are provided:
//!
//! - `chain`: states `0..N`, actions left/right, start at 0, reward +1 on
//!   entering `N-1` which is terminal. Moving left from 0 stays at 0.
//! - `gridworld`: `width x height` cells, actions up/right/down/left, start at
//!   `(0, 0)`, reward +1 on entering the terminal goal `(width-1, height-1)`.
//!   Moves into a wall leave the agent in place.
//! - `windy-gridworld`: the gridworld plus a wind that, with probability
//!   `slip_probability`, pushes the agent one extra cell up (towards row 0)
//!   after its move.
//!
//! Observations are one-hot encodings of the state index. Episodes end on the
//! goal or after `max_episode_steps` steps (truncation).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeding::{self, tag, StreamRng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Chain,
    Gridworld,
    WindyGridworld,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Chain length N (chain only).
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default)]
    pub slip_probability: f64,
    pub max_episode_steps: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_length() -> usize {
    5
}

fn default_side() -> usize {
    4
}

impl EnvSpec {
    pub fn chain(length: usize, max_episode_steps: u32) -> Self {
        EnvSpec {
            kind: EnvKind::Chain,
            length,
            width: default_side(),
            height: default_side(),
            slip_probability: 0.0,
            max_episode_steps,
            seed: 0,
        }
    }

    pub fn gridworld(width: usize, height: usize, max_episode_steps: u32) -> Self {
        EnvSpec {
            kind: EnvKind::Gridworld,
            length: default_length(),
            width,
            height,
            slip_probability: 0.0,
            max_episode_steps,
            seed: 0,
        }
    }

    pub fn windy_gridworld(
        width: usize,
        height: usize,
        slip_probability: f64,
        max_episode_steps: u32,
    ) -> Self {
        EnvSpec {
            kind: EnvKind::WindyGridworld,
            slip_probability,
            ..Self::gridworld(width, height, max_episode_steps)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_episode_steps == 0 {
            return Err(Error::config("max_episode_steps must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.slip_probability) {
            return Err(Error::config("slip_probability must lie in [0, 1]"));
        }
        match self.kind {
            EnvKind::Chain => {
                if self.length < 2 {
                    return Err(Error::config("chain length must be at least 2"));
                }
                if self.slip_probability != 0.0 {
                    return Err(Error::config(
                        "chain is deterministic; slip_probability must be 0",
                    ));
                }
            }
            EnvKind::Gridworld | EnvKind::WindyGridworld => {
                if self.width == 0 || self.height == 0 || self.width * self.height < 2 {
                    return Err(Error::config("gridworld needs at least two cells"));
                }
                if self.kind == EnvKind::Gridworld && self.slip_probability != 0.0 {
                    return Err(Error::config(
                        "gridworld is deterministic; slip_probability must be 0",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        match self.kind {
            EnvKind::Chain => self.length,
            EnvKind::Gridworld | EnvKind::WindyGridworld => self.width * self.height,
        }
    }

    pub fn action_count(&self) -> usize {
        match self.kind {
            EnvKind::Chain => 2,
            EnvKind::Gridworld | EnvKind::WindyGridworld => 4,
        }
    }

    pub fn observation_len(&self) -> usize {
        self.state_count()
    }

    pub fn start_state(&self) -> usize {
        0
    }

    pub fn goal_state(&self) -> usize {
        self.state_count() - 1
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        state == self.goal_state()
    }

    /// Exact one-step transition distribution from a non-terminal state.
    pub fn transition_model(&self, state: usize, action: usize) -> Vec<Outcome> {
        let moved = self.deterministic_move(state, action);
        let mut outcomes = Vec::with_capacity(2);
        if self.kind == EnvKind::WindyGridworld && self.slip_probability > 0.0 {
            let blown = self.wind_push(moved);
            outcomes.push(self.outcome(1.0 - self.slip_probability, moved));
            outcomes.push(self.outcome(self.slip_probability, blown));
        } else {
            outcomes.push(self.outcome(1.0, moved));
        }
        outcomes
    }

    fn outcome(&self, probability: f64, next: usize) -> Outcome {
        let terminal = self.is_terminal(next);
        Outcome {
            probability,
            next,
            reward: if terminal { 1.0 } else { 0.0 },
            terminal,
        }
    }

    fn deterministic_move(&self, state: usize, action: usize) -> usize {
        match self.kind {
            EnvKind::Chain => match action {
                0 => state.saturating_sub(1),
                _ => (state + 1).min(self.length - 1),
            },
            EnvKind::Gridworld | EnvKind::WindyGridworld => {
                let (x, y) = (state % self.width, state / self.width);
                let (x, y) = match action {
                    0 => (x, y.saturating_sub(1)),
                    1 => ((x + 1).min(self.width - 1), y),
                    2 => (x, (y + 1).min(self.height - 1)),
                    _ => (x.saturating_sub(1), y),
                };
                y * self.width + x
            }
        }
    }

    fn wind_push(&self, state: usize) -> usize {
        if self.is_terminal(state) {
            return state;
        }
        let (x, y) = (state % self.width, state / self.width);
        y.saturating_sub(1) * self.width + x
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub probability: f64,
    pub next: usize,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub state_id: Option<usize>,
}

impl Observation {
    pub fn one_hot(state: usize, len: usize) -> Self {
        let mut features = vec![0.0; len];
        features[state] = 1.0;
        Observation {
            features,
            state_id: Some(state),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    /// The episode is over, either at the goal or by truncation.
    pub done: bool,
    /// The episode ended only because `max_episode_steps` ran out.
    pub truncated: bool,
}

impl StepResult {
    /// Whether the next state is a true terminal (no bootstrapping).
    pub fn terminal(&self) -> bool {
        self.done && !self.truncated
    }
}

/// A running environment instance.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: EnvSpec,
    instance_seed: u64,
    state: usize,
    steps: u32,
    finished: bool,
    rng: StreamRng,
}

impl Environment {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        let seed = spec.seed;
        Self::with_instance_seed(spec, seed)
    }

    /// An instance whose episode streams are additionally keyed by `key`, so
    /// several instances built from one spec draw independent randomness.
    pub fn with_stream(spec: EnvSpec, key: &[u64]) -> Result<Self> {
        let seed = seeding::derive(spec.seed, key);
        Self::with_instance_seed(spec, seed)
    }

    fn with_instance_seed(spec: EnvSpec, instance_seed: u64) -> Result<Self> {
        spec.validate()?;
        let state = spec.start_state();
        Ok(Environment {
            rng: seeding::stream(instance_seed, &[tag::EPISODE, 0]),
            spec,
            instance_seed,
            state,
            steps: 0,
            finished: true,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn action_count(&self) -> usize {
        self.spec.action_count()
    }

    pub fn observation_len(&self) -> usize {
        self.spec.observation_len()
    }

    pub fn reset(&mut self, episode_seed: u64) -> Observation {
        self.rng = seeding::stream(self.instance_seed, &[tag::EPISODE, episode_seed]);
        self.state = self.spec.start_state();
        self.steps = 0;
        self.finished = false;
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        let action_count = self.spec.action_count();
        if action >= action_count {
            return Err(Error::InvalidAction {
                action,
                action_count,
            });
        }
        let mut next = self.spec.deterministic_move(self.state, action);
        if self.spec.kind == EnvKind::WindyGridworld && self.spec.slip_probability > 0.0 {
            // One draw per step keeps the stream aligned regardless of outcome.
            let u: f64 = self.rng.gen();
            if u < self.spec.slip_probability {
                next = self.spec.wind_push(next);
            }
        }
        self.state = next;
        self.steps += 1;
        let terminal = self.spec.is_terminal(next);
        let truncated = !terminal && self.steps >= self.spec.max_episode_steps;
        self.finished = terminal || truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward: if terminal { 1.0 } else { 0.0 },
            done: self.finished,
            truncated,
        })
    }

    fn observe(&self) -> Observation {
        Observation::one_hot(self.state, self.spec.observation_len())
    }
}

/// Tabular action values, row-major by state.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub state_count: usize,
    pub action_count: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.action_count + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.action_count..(state + 1) * self.action_count]
    }

    pub fn state_value(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax with ties to the lowest action index.
    pub fn greedy_action(&self, state: usize) -> usize {
        crate::learner::argmax(self.row(state))
    }

    /// Sup-norm distance between this table and its Bellman optimality backup.
    pub fn bellman_residual(&self, spec: &EnvSpec, discount: f64) -> f64 {
        let backup = bellman_backup(spec, discount, self);
        self.values
            .iter()
            .zip(&backup.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn bellman_backup(spec: &EnvSpec, discount: f64, q: &QTable) -> QTable {
    let (states, actions) = (spec.state_count(), spec.action_count());
    let mut values = vec![0.0; states * actions];
    for s in (0..states).filter(|&s| !spec.is_terminal(s)) {
        for a in 0..actions {
            values[s * actions + a] = spec
                .transition_model(s, a)
                .iter()
                .map(|o| {
                    let future = if o.terminal {
                        0.0
                    } else {
                        q.state_value(o.next)
                    };
                    o.probability * (o.reward + discount * future)
                })
                .sum();
        }
    }
    QTable {
        state_count: states,
        action_count: actions,
        values,
    }
}

/// Optimal action values by value iteration, ignoring the episode time limit.
/// Terminal states have value 0 for every action.
pub fn optimal_q(spec: &EnvSpec, discount: f64) -> Result<QTable> {
    spec.validate()?;
    if !(0.0..1.0).contains(&discount) {
        return Err(Error::config("discount must lie in [0, 1)"));
    }
    let mut q = QTable {
        state_count: spec.state_count(),
        action_count: spec.action_count(),
        values: vec![0.0; spec.state_count() * spec.action_count()],
    };
    // Contraction by `discount` per sweep; stop once the update stalls.
    for _ in 0..1_000_000 {
        let next = bellman_backup(spec, discount, &q);
        let delta = q
            .values
            .iter()
            .zip(&next.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = next;
        if delta <= 1e-13 {
            break;
        }
    }
    Ok(q)
}
