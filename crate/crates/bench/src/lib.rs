//! Benchmark harness for `tabtext`: JSON run configs, the strategy
//! catalogue, a runner that scores every (dataset, seed, strategy) cell on a
//! shared split, and a generator of synthetic multimodal tables.

pub mod config;
pub mod runner;
pub mod strategy;
pub mod synth;

pub use config::{DatasetConfig, RunConfig, StrategyOptions};
pub use runner::{execute, run, CellResult, Outcome, RunReport};
pub use strategy::{Method, Strategy};
pub use synth::{gen_synthetic, Allocation, SyntheticSpec};
