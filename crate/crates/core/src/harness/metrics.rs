//! Pool-level summaries of evaluation returns and behavior-selection
//! frequencies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::abps::SelectionEvent;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub best: f64,
    /// 75th percentile of the agents' returns.
    pub top25_quantile: f64,
    /// Population variance over agents.
    pub variance: f64,
    pub median: f64,
}

/// Percentile with linear interpolation between closest ranks:
/// rank `p * (n - 1)` into the sorted values.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::config("percentile of an empty set"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("percentile {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64))
}

pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn epoch_metrics(returns: &[f64]) -> Result<EpochMetrics> {
    if returns.is_empty() {
        return Err(Error::config("evaluation row has no agents"));
    }
    Ok(EpochMetrics {
        best: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        top25_quantile: percentile(returns, 0.75)?,
        variance: population_variance(returns),
        median: percentile(returns, 0.5)?,
    })
}

/// One [`EpochMetrics`] per row of per-agent mean returns.
pub fn compute_metrics<R: AsRef<[f64]>>(eval_matrix: &[R]) -> Result<Vec<EpochMetrics>> {
    if eval_matrix.is_empty() {
        return Err(Error::config("evaluation matrix is empty"));
    }
    eval_matrix
        .iter()
        .map(|row| epoch_metrics(row.as_ref()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Arm,
    Architecture,
    LearningRate,
    EpsilonDecay,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Arm,
        Attribute::Architecture,
        Attribute::LearningRate,
        Attribute::EpsilonDecay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Arm => "arm",
            Attribute::Architecture => "architecture",
            Attribute::LearningRate => "learning_rate",
            Attribute::EpsilonDecay => "epsilon_decay",
        }
    }
}

/// Buckets per decade for the log-scaled attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bucketing {
    pub learning_rate_per_decade: u32,
    pub epsilon_decay_per_decade: u32,
}

impl Default for Bucketing {
    fn default() -> Self {
        Bucketing {
            learning_rate_per_decade: 1,
            epsilon_decay_per_decade: 1,
        }
    }
}

/// Lower edge of the log10 bucket holding `x`, e.g. `1e-3` for `4.2e-3`.
fn log_bucket(x: f64, per_decade: u32) -> String {
    if x.is_nan() || x <= 0.0 {
        return "0".into();
    }
    let n = per_decade.max(1) as f64;
    let edge = (x.log10() * n).floor() / n;
    if per_decade <= 1 {
        format!("1e{}", edge as i64)
    } else {
        format!("1e{edge:.3}")
    }
}

fn bucket_of(event: &SelectionEvent, attribute: Attribute, bucketing: Bucketing) -> String {
    match attribute {
        Attribute::Arm => event.arm.to_string(),
        Attribute::Architecture => event
            .architecture
            .clone()
            .unwrap_or_else(|| "unnamed".into()),
        Attribute::LearningRate => {
            log_bucket(event.learning_rate, bucketing.learning_rate_per_decade)
        }
        Attribute::EpsilonDecay => log_bucket(
            event.epsilon_decay_steps as f64,
            bucketing.epsilon_decay_per_decade,
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub epoch: usize,
    pub env_steps: u64,
    pub attribute: Attribute,
    pub bucket: String,
    /// Selections ending at or before `env_steps`.
    pub count: u64,
    /// `count` over all selections so far; 0 before the first one.
    pub frequency: f64,
}

/// Cumulative selection counts at each epoch boundary (training steps), per
/// arm and per hyper-parameter bucket. Every arm in `0..k` gets a row even
/// when never selected; attribute buckets appear once seen.
pub fn selection_frequencies(
    events: &[SelectionEvent],
    k: usize,
    boundaries: &[u64],
    bucketing: Bucketing,
) -> Vec<FrequencyRow> {
    let mut rows = Vec::new();
    for (epoch, &boundary) in boundaries.iter().enumerate() {
        let seen: Vec<&SelectionEvent> =
            events.iter().filter(|e| e.env_steps <= boundary).collect();
        let total = seen.len() as u64;
        for attribute in Attribute::ALL {
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            if attribute == Attribute::Arm {
                for arm in 0..k {
                    counts.insert(arm.to_string(), 0);
                }
            }
            for e in events {
                counts
                    .entry(bucket_of(e, attribute, bucketing))
                    .or_insert(0);
            }
            for e in &seen {
                *counts
                    .entry(bucket_of(e, attribute, bucketing))
                    .or_insert(0) += 1;
            }
            let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
            if attribute == Attribute::Arm {
                entries.sort_by_key(|(b, _)| b.parse::<usize>().unwrap_or(usize::MAX));
            }
            for (bucket, count) in entries {
                rows.push(FrequencyRow {
                    epoch,
                    env_steps: boundary,
                    attribute,
                    bucket,
                    count,
                    frequency: if total == 0 {
                        0.0
                    } else {
                        count as f64 / total as f64
                    },
                });
            }
        }
    }
    rows
}
