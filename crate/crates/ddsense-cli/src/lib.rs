//! Experiment configuration, Monte Carlo sweep harness, plotting, and
//! measurement-file formats behind the `ddsense` CLI.

pub mod config;
pub mod measurements;
pub mod plot;
pub mod sweep;
