//! Simulation and calibration core for a wake-up-radio assisted neuromorphic
//! split-computing link.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function of
//! its inputs and of the deterministic random streams handed to it; IO, file
//! formats, thread pools and the command line live in the `wakelink` crate.
//!
//! Layout:
//!
//! - [`config`]: threshold triples, link configuration, hyperparameter grids.
//! - [`rng`]: named, reproducible random substreams.
//! - [`signal`]: sensed-sequence generator and Gaussian signal/noise models.
//! - [`qusum`]: cumulative-sum onset detection at the transmitter.
//! - [`snn`]: LIF encoder/decoder networks and the pilot hypernetwork.
//! - [`train`]: surrogate-gradient trainer for the three networks.
//! - [`phy`]: chip-level impulse-radio link, fading channels, WUS detection.
//! - [`pipeline`]: one end-to-end trial and its per-trial metrics.
//! - [`calibrate`]: twin pre-selection, on-air fixed-sequence testing,
//!   benchmark modes and the coverage harness.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod calibrate;
pub mod config;
pub mod exec;
pub mod linalg;
pub mod phy;
pub mod pipeline;
pub mod qusum;
pub mod rng;
pub mod signal;
pub mod snn;
pub mod train;

pub use calibrate::{
    CalibrationResult, CandidateEval, CoverageReport, Origin, ParetoSet, SelectionRule,
};
pub use config::{
    default_paper_config, default_paper_grid, ConfigError, DataConfig, ExperimentConfig,
    HyperGrid, Hyperparams, NetConfig, SimConfig, TrainConfig,
};
pub use exec::{Executor, Sequential};
pub use pipeline::{ClassSet, Models, TrialPolicy, TrialRecord};
pub use rng::{derive_stream, Purpose, Split, Stream};
