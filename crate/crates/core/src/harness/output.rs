//! CSV and snapshot files for a finished run.
//!
//! Every file is rendered in memory first and then moved into place through
//! a temporary file in the same directory, so readers never see a partial
//! file and a failed run leaves nothing behind.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abps::TrainingLog;
use crate::{Error, Result};

use super::experiment::RunArtifacts;
use super::metrics::{compute_metrics, selection_frequencies, Bucketing, EpochMetrics};

pub const EVAL_CSV: &str = "eval.csv";
pub const SELECTIONS_CSV: &str = "selections.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const FREQUENCIES_CSV: &str = "frequencies.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const SUMMARY: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub env_steps: u64,
    pub agent_id: u32,
    pub mean_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub round: u64,
    pub arm: usize,
    pub period_reward: Option<f64>,
    pub agent_id: u32,
    pub time: u64,
    pub env_steps: u64,
    pub episodes: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub round: u64,
    pub agent_id: u32,
    pub action: String,
    pub src_agent: Option<u32>,
    pub old_learning_rate: f64,
    pub new_learning_rate: f64,
    pub old_epsilon_decay_steps: u64,
    pub new_epsilon_decay_steps: u64,
    pub eval_return: Option<f64>,
    pub arm: usize,
    pub src_arm: Option<usize>,
    pub time: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub env_steps: u64,
    pub best: f64,
    pub top25_quantile: f64,
    pub variance: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub seed: u64,
    pub agents: usize,
    pub env_steps: u64,
    pub eval_env_steps: u64,
    pub total_interactions: u64,
}

fn to_csv<T: Serialize>(records: impl IntoIterator<Item = T>, header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    // Written by hand so empty files still carry their schema.
    w.write_record(header)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Snapshot(e.to_string()))
}

pub fn eval_records(log: &TrainingLog) -> Vec<EvalRecord> {
    log.eval_rows
        .iter()
        .flat_map(|row| {
            row.returns
                .iter()
                .zip(&log.agent_ids)
                .map(|(&r, &id)| EvalRecord {
                    epoch: row.epoch,
                    env_steps: row.env_steps,
                    agent_id: id,
                    mean_return: r,
                })
        })
        .collect()
}

pub fn eval_csv(log: &TrainingLog) -> Result<Vec<u8>> {
    to_csv(
        eval_records(log),
        &["epoch", "env_steps", "agent_id", "mean_return"],
    )
}

pub fn selections_csv(log: &TrainingLog) -> Result<Vec<u8>> {
    let records = log.selection_events.iter().map(|e| SelectionRecord {
        round: e.round,
        arm: e.arm,
        period_reward: e.period_reward,
        agent_id: e.agent_id,
        time: e.time,
        env_steps: e.env_steps,
        episodes: e.episodes,
    });
    to_csv(
        records,
        &[
            "round",
            "arm",
            "period_reward",
            "agent_id",
            "time",
            "env_steps",
            "episodes",
        ],
    )
}

pub fn events_csv(log: &TrainingLog) -> Result<Vec<u8>> {
    let records = log.pbt_events.iter().map(|e| EventRecord {
        round: e.round,
        agent_id: e.agent_id,
        action: e.action.as_str().into(),
        src_agent: e.src_agent,
        old_learning_rate: e.old_learning_rate,
        new_learning_rate: e.new_learning_rate,
        old_epsilon_decay_steps: e.old_epsilon_decay_steps,
        new_epsilon_decay_steps: e.new_epsilon_decay_steps,
        eval_return: e.eval_return,
        arm: e.arm,
        src_arm: e.src_arm,
        time: e.time,
    });
    to_csv(
        records,
        &[
            "round",
            "agent_id",
            "action",
            "src_agent",
            "old_learning_rate",
            "new_learning_rate",
            "old_epsilon_decay_steps",
            "new_epsilon_decay_steps",
            "eval_return",
            "arm",
            "src_arm",
            "time",
        ],
    )
}

/// Per-epoch metrics rows, epochs in order.
pub fn metrics_records(epochs: &[(usize, u64)], metrics: &[EpochMetrics]) -> Vec<MetricsRecord> {
    epochs
        .iter()
        .zip(metrics)
        .map(|(&(epoch, env_steps), m)| MetricsRecord {
            epoch,
            env_steps,
            best: m.best,
            top25_quantile: m.top25_quantile,
            variance: m.variance,
            median: m.median,
        })
        .collect()
}

pub fn metrics_csv(records: &[MetricsRecord]) -> Result<Vec<u8>> {
    to_csv(
        records,
        &[
            "epoch",
            "env_steps",
            "best",
            "top25_quantile",
            "variance",
            "median",
        ],
    )
}

fn log_metrics(log: &TrainingLog) -> Result<Vec<MetricsRecord>> {
    let matrix: Vec<&[f64]> = log.eval_rows.iter().map(|r| r.returns.as_slice()).collect();
    let epochs: Vec<(usize, u64)> = log
        .eval_rows
        .iter()
        .map(|r| (r.epoch, r.env_steps))
        .collect();
    Ok(metrics_records(&epochs, &compute_metrics(&matrix)?))
}

pub fn frequencies_csv(log: &TrainingLog) -> Result<Vec<u8>> {
    let boundaries: Vec<u64> = log.eval_rows.iter().map(|r| r.env_steps).collect();
    let rows = selection_frequencies(
        &log.selection_events,
        log.agent_ids.len(),
        &boundaries,
        Bucketing::default(),
    );
    to_csv(
        rows,
        &[
            "epoch",
            "env_steps",
            "attribute",
            "bucket",
            "count",
            "frequency",
        ],
    )
}

/// Writes `bytes` to `dir/name` via a temporary sibling file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
    Ok(())
}

/// All run outputs, rendered in memory.
pub fn render(artifacts: &RunArtifacts) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let log = &artifacts.log;
    let summary = Summary {
        mode: artifacts.config.mode.as_str().into(),
        seed: artifacts.config.seed,
        agents: log.agent_ids.len(),
        env_steps: log.env_steps,
        eval_env_steps: log.eval_env_steps,
        total_interactions: log.total_interactions,
    };
    let mut summary_json = serde_json::to_vec_pretty(&summary)?;
    summary_json.push(b'\n');
    let mut files = vec![
        (EVAL_CSV, eval_csv(log)?),
        (SELECTIONS_CSV, selections_csv(log)?),
        (EVENTS_CSV, events_csv(log)?),
        (METRICS_CSV, metrics_csv(&log_metrics(log)?)?),
        (FREQUENCIES_CSV, frequencies_csv(log)?),
        (RESOLVED_CONFIG, artifacts.config.to_toml()?.into_bytes()),
        (SUMMARY, summary_json),
    ];
    if let Some(ckpt) = &artifacts.checkpoint {
        files.push((CHECKPOINT, ckpt.to_bytes()?));
    }
    Ok(files)
}

pub fn write_run(dir: &Path, artifacts: &RunArtifacts) -> Result<()> {
    let files = render(artifacts)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in &files {
        write_atomic(dir, name, bytes)?;
    }
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Snapshot(format!("{}: {other:?}", path.display())),
    })?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()?)
}

/// `(epoch, env_steps)` keys and the per-agent returns of each epoch.
pub type EvalMatrix = (Vec<(usize, u64)>, Vec<Vec<f64>>);

/// Groups eval records back into per-epoch rows ordered by agent id as
/// first seen.
pub fn eval_matrix(records: &[EvalRecord]) -> Result<EvalMatrix> {
    let mut epochs: Vec<(usize, u64)> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for r in records {
        match epochs.last() {
            Some(&(e, _)) if e == r.epoch => {}
            _ => {
                if epochs.iter().any(|&(e, _)| e == r.epoch) {
                    return Err(Error::config(format!(
                        "epoch {} is not contiguous in eval.csv",
                        r.epoch
                    )));
                }
                epochs.push((r.epoch, r.env_steps));
                rows.push(Vec::new());
            }
        }
        rows.last_mut().expect("pushed above").push(r.mean_return);
    }
    if rows.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::config(
            "eval.csv epochs list different numbers of agents",
        ));
    }
    Ok((epochs, rows))
}

/// Metrics recomputed from an `eval.csv` file.
pub fn metrics_from_eval_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let records: Vec<EvalRecord> = read_csv(path)?;
    let (epochs, rows) = eval_matrix(&records)?;
    Ok(metrics_records(&epochs, &compute_metrics(&rows)?))
}
