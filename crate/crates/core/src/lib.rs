//! Adaptive behavior policy sharing (ABPS).
//!
//! A pool of DQN-style learners with different hyper-parameters trains from a
//! single shared replay buffer. Only one learner acts on the environment at a
//! time; a non-stationary multi-armed bandit over the pool decides which one,
//! based on the returns its behavior periods collect. The [`pbt`] module adds
//! population based training on top: weak learners periodically copy strong
//! ones (ranked by the bandit values) and perturb the copied hyper-parameters.
//!
//! Module map:
//!
//! - [`env`]: seed-deterministic tabular environments and a value-iteration oracle.
//! - [`replay`]: the shared FIFO experience buffer.
//! - [`nn`] / [`learner`]: MLP Q-network with hand-written backprop, Adam, ε-greedy acting.
//! - [`bandit`]: the behavior-selection bandit (random, UCB, ε-greedy, softmax).
//! - [`abps`]: the training orchestrator.
//! - [`pbt`]: exploit/explore on top of the orchestrator.
//! - [`harness`]: config files, pool priors, the independent baseline, metrics, CSV output and the CLI.

pub mod abps;
pub mod bandit;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod harness;
pub mod learner;
pub mod nn;
pub mod pbt;
pub mod replay;
pub mod seeding;

pub use error::{Error, Result};
