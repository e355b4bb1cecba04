//! Conventional tuning for comparison: every agent trains alone with its own
//! buffer and its own full interaction budget.

use rayon::prelude::*;

use crate::abps::{run_abps, AbpsConfig, AgentSpec, EvalRow, TrainingLog};
use crate::env::EnvSpec;
use crate::{Error, Result};

/// Trains each agent as a one-learner ABPS run (no bandit choice to make)
/// and merges the logs. Agents keep their own RNG streams, keyed by id, so
/// a log does not depend on the rest of the pool. Selection events are
/// concatenated per agent with `arm` set to the pool position.
///
/// `env_steps` is the per-agent budget; `total_interactions` is the sum
/// over agents.
pub fn run_independent_baseline(
    config: &AbpsConfig,
    pool: &[AgentSpec],
    env: &EnvSpec,
    run_seed: u64,
) -> Result<TrainingLog> {
    if pool.is_empty() {
        return Err(Error::config("pool must contain at least one agent"));
    }
    let logs: Vec<TrainingLog> = pool
        .par_iter()
        .map(|agent| run_abps(config, std::slice::from_ref(agent), env, run_seed))
        .collect::<Result<_>>()?;
    merge(pool, logs)
}

fn merge(pool: &[AgentSpec], logs: Vec<TrainingLog>) -> Result<TrainingLog> {
    let rows = logs[0].eval_rows.len();
    if logs.iter().any(|l| l.eval_rows.len() != rows) {
        return Err(Error::config(
            "independent runs produced different evaluation schedules",
        ));
    }
    let eval_rows = (0..rows)
        .map(|e| EvalRow {
            epoch: e,
            env_steps: logs[0].eval_rows[e].env_steps,
            returns: logs.iter().map(|l| l.eval_rows[e].returns[0]).collect(),
        })
        .collect();
    let mut selection_events = Vec::new();
    for (arm, log) in logs.iter().enumerate() {
        selection_events.extend(log.selection_events.iter().cloned().map(|mut e| {
            e.arm = arm;
            e
        }));
    }
    Ok(TrainingLog {
        agent_ids: pool.iter().map(|a| a.id).collect(),
        eval_rows,
        selection_events,
        pbt_events: Vec::new(),
        env_steps: logs[0].env_steps,
        eval_env_steps: logs.iter().map(|l| l.eval_env_steps).sum(),
        total_interactions: logs.iter().map(|l| l.env_steps).sum(),
    })
}
