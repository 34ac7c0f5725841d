//! Gaussian-process Bayesian optimization of vibration gaits for a simulated
//! six-strut soft tensegrity robot.

pub mod bo;
pub mod error;
pub mod gp;
pub mod harness;
pub mod profiles;
pub mod sim;
pub mod tasks;

pub use bo::{BoConfig, OptimizationTrace, Outcome, PriorSpec, Trial};
pub use error::{Error, Result};
pub use gp::{GpModel, KernelParams, Prediction, TrainingSet};
pub use harness::{ExperimentConfig, ExperimentResult, StatsSummary, Treatment};
pub use profiles::{AxisPair, ProfileGrid};
pub use sim::{SimParams, TensegrityState, Variant};
pub use tasks::{EpisodeOptions, EpisodeResult, Policy, Robot};
