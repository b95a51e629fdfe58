//! Camera-radar multi-object tracking: projection geometry, detection
//! heatmaps, frustum-based radar fusion, greedy association, track
//! lifecycle, AMOTA evaluation, a deterministic scenario simulator and
//! exact reference oracles.

pub mod association;
pub mod cli;
pub mod fusion;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod simulator;
pub mod tracker;
