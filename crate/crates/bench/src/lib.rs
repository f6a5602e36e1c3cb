//! Shared fixtures for the benchmarks.

use claimstate_core::simgen::{self, SimData, SimSpec};
use claimstate_core::ModelConfig;

/// Simulated data of `n` rows with the default design and a fixed seed.
pub fn simulated(n: usize) -> (SimData, ModelConfig) {
    let spec = SimSpec {
        n,
        seed: 11,
        ..SimSpec::default()
    };
    let data = simgen::generate(&spec).expect("valid simulation spec");
    let config = simgen::default_model_config(&spec)
        .and_then(|c| c.with_tau(vec![1e3, 1e3]))
        .expect("valid model config");
    (data, config)
}
