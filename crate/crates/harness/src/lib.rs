//! Configuration, Monte-Carlo sweeps and result files for the pose estimators.

pub mod config;
pub mod experiment;
pub mod output;
