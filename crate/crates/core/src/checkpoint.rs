//! Run snapshots: pool weights, bandit state, buffer metadata and RNG
//! cursors.
//!
//! Layout: the 8-byte magic `ABPSCKP1`, a little-endian `u64` length and the
//! JSON metadata, then one length-prefixed [`WeightSnapshot`] per agent in
//! pool order. Buffer contents are not stored, only their counters.

use serde::{Deserialize, Serialize};

use crate::abps::AbpsRun;
use crate::bandit::BanditState;
use crate::learner::HyperParams;
use crate::nn::WeightSnapshot;
use crate::seeding::StreamRng;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ABPSCKP1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferMeta {
    pub capacity: usize,
    pub len: usize,
    pub insert_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentMeta {
    pub agent_id: u32,
    pub arm_index: usize,
    pub hyper: HyperParams,
    pub train_step_count: u64,
    pub act_step_count: u64,
    pub act_rng: StreamRng,
    pub batch_rng: StreamRng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub run_seed: u64,
    pub round: u64,
    pub env_steps: u64,
    pub episode_counter: u64,
    pub bandit: BanditState,
    pub bandit_rng: StreamRng,
    pub buffer: BufferMeta,
    pub agents: Vec<AgentMeta>,
    pub pbt_rng: Option<StreamRng>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    /// Online network of each agent, in pool order.
    pub weights: Vec<WeightSnapshot>,
}

impl Checkpoint {
    pub fn capture(run: &AbpsRun) -> Self {
        let agents = run
            .pool
            .iter()
            .map(|slot| AgentMeta {
                agent_id: slot.agent_id,
                arm_index: slot.arm_index,
                hyper: slot.hyper().clone(),
                train_step_count: slot.learner.train_step_count(),
                act_step_count: slot.learner.act_step_count(),
                act_rng: slot.act_rng.clone(),
                batch_rng: slot.batch_rng.clone(),
            })
            .collect();
        Checkpoint {
            meta: CheckpointMeta {
                run_seed: run.run_seed,
                round: run.round,
                env_steps: run.log.env_steps,
                episode_counter: run.episode_counter,
                bandit: run.bandit.clone(),
                bandit_rng: run.bandit_rng.clone(),
                buffer: BufferMeta {
                    capacity: run.buffer.capacity(),
                    len: run.buffer.len(),
                    insert_count: run.buffer.insert_count(),
                },
                agents,
                pbt_rng: run.pbt.as_ref().map(|p| p.rng.clone()),
            },
            weights: run.pool.iter().map(|s| s.learner.clone_weights()).collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(meta.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        for w in &self.weights {
            let bytes = w.to_bytes();
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| Error::Snapshot("not a checkpoint file".into()))?;
        let (meta, mut rest) = take_chunk(rest)?;
        let meta: CheckpointMeta = serde_json::from_slice(meta)?;
        let mut weights = Vec::with_capacity(meta.agents.len());
        for _ in 0..meta.agents.len() {
            let (chunk, tail) = take_chunk(rest)?;
            let (w, used) = WeightSnapshot::from_bytes(chunk)?;
            if used != chunk.len() {
                return Err(Error::Snapshot("weight block length mismatch".into()));
            }
            weights.push(w);
            rest = tail;
        }
        if !rest.is_empty() {
            return Err(Error::Snapshot(format!("{} trailing bytes", rest.len())));
        }
        Ok(Checkpoint { meta, weights })
    }
}

fn take_chunk(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    let truncated = || Error::Snapshot("checkpoint truncated".into());
    let (len, rest) = bytes.split_first_chunk::<8>().ok_or_else(truncated)?;
    let len = usize::try_from(u64::from_le_bytes(*len)).map_err(|_| truncated())?;
    if rest.len() < len {
        return Err(truncated());
    }
    Ok(rest.split_at(len))
}
