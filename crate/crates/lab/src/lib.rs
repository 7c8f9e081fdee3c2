//! Experiment runner for concentrating quasimodes: configs, presets, sweeps,
//! exponent fits and reports.

pub mod config;
pub mod fit;
pub mod preset;
pub mod report;
pub mod sweep;
pub mod table;
