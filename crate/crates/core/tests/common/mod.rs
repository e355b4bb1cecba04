#![allow(dead_code)]

use abps_core::env::QTable;
use abps_core::learner::{HyperParams, Learner};
use abps_core::nn::{Layer, QNetwork};

/// A network whose greedy output reproduces `q` exactly on one-hot inputs:
/// an identity ReLU layer followed by a linear read-out of the table.
pub fn tabular_network(q: &QTable) -> QNetwork {
    let n = q.state_count;
    let identity: Vec<Vec<f64>> = (0..n)
        .map(|o| (0..n).map(|i| if i == o { 1.0 } else { 0.0 }).collect())
        .collect();
    let readout: Vec<Vec<f64>> = (0..q.action_count)
        .map(|a| (0..n).map(|s| q.get(s, a)).collect())
        .collect();
    QNetwork::from_layers(vec![
        Layer::from_rows(&identity, vec![0.0; n]).unwrap(),
        Layer::from_rows(&readout, vec![0.0; q.action_count]).unwrap(),
    ])
    .unwrap()
}

pub fn tabular_learner(q: &QTable, learning_rate: f64) -> Learner {
    let hyper = HyperParams {
        architecture: Some("tabular".into()),
        hidden_sizes: vec![q.state_count],
        learning_rate,
        ..HyperParams::default()
    };
    Learner::from_network(hyper, tabular_network(q))
}

pub fn hyper(hidden: &[usize], learning_rate: f64, epsilon_decay_steps: u64) -> HyperParams {
    HyperParams {
        architecture: None,
        hidden_sizes: hidden.to_vec(),
        learning_rate,
        epsilon_decay_steps,
        ..HyperParams::default()
    }
}
