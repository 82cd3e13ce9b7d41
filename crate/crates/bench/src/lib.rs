//! Shared inputs for the benchmarks.

use stsccl_core::graph_data::{make_windows, synth_traffic, GraphSpec, WindowBatch};
use stsccl_core::training::{ModelConfig, TrainConfig};

/// One training batch from the default synthetic dataset.
pub fn batch(n_nodes: usize, batch_size: usize) -> (WindowBatch, GraphSpec) {
    let (series, graph) = synth_traffic(n_nodes, 10, 30, 7).expect("synthetic data");
    let series = series.map_values(|v| v / 50.0);
    let batch = make_windows(&series, 0..series.len(), 12, 3, batch_size, 1)
        .expect("windows")
        .next()
        .expect("one batch");
    (batch, graph)
}

pub fn configs() -> (ModelConfig, TrainConfig) {
    (ModelConfig::default(), TrainConfig::default())
}
