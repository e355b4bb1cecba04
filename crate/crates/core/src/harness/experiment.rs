//! Runs a resolved experiment config in its configured mode.

use crate::abps::{AbpsRun, TrainingLog};
use crate::checkpoint::Checkpoint;
use crate::pbt::PbtConfig;
use crate::Result;

use super::baseline::run_independent_baseline;
use super::config::{ExperimentConfig, Mode};

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    /// Resolved config: explicit pool, no prior.
    pub config: ExperimentConfig,
    pub log: TrainingLog,
    /// End-of-run snapshot; absent for the independent baseline.
    pub checkpoint: Option<Checkpoint>,
}

pub fn execute(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let config = config.resolved()?;
    let agents = config.agents()?;
    let (log, checkpoint) = match config.mode {
        Mode::IndependentBaseline => {
            let log = run_independent_baseline(&config.abps, &agents, &config.env, config.seed)?;
            (log, None)
        }
        Mode::Abps | Mode::AbpsPbt => {
            let mut run = AbpsRun::new(config.abps.clone(), &agents, &config.env, config.seed)?;
            if config.mode == Mode::AbpsPbt {
                let pbt = config.pbt.clone().unwrap_or_else(PbtConfig::default);
                run = run.with_pbt(pbt)?;
            }
            run.run_to_end()?;
            let checkpoint = Checkpoint::capture(&run);
            (run.into_log(), Some(checkpoint))
        }
    };
    Ok(RunArtifacts {
        config,
        log,
        checkpoint,
    })
}
