//! Experiment runner for the `vidfuse` library: configs, checkpoints, the
//! end-to-end pipeline, gradient checks and sparsity sweeps.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod sweep;
