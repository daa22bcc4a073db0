//! Independent runs in parallel. Each run is sequential inside; with the
//! `parallel` feature off everything runs on the calling thread.

use super::config::ScenarioConfig;
use super::experiment::{run_experiment, Experiment};
use crate::error::Result;

/// Copies of `config` with seeds `first..first + count`.
pub fn seed_sweep(config: &ScenarioConfig, first: u64, count: usize) -> Vec<ScenarioConfig> {
    (0..count as u64)
        .map(|i| {
            let mut c = config.clone();
            c.seed = first + i;
            c
        })
        .collect()
}

pub fn run_batch_sequential(configs: &[ScenarioConfig]) -> Vec<Result<Experiment>> {
    configs.iter().map(run_experiment).collect()
}

/// Results come back in input order either way.
pub fn run_batch(configs: &[ScenarioConfig]) -> Vec<Result<Experiment>> {
    crate::par::map(configs, run_experiment)
}
