//! Self-calibrated ABC-SMC² for joint parameter and state inference in
//! state space models whose transition and emission densities can be
//! simulated but not evaluated.

pub mod distributions;
pub mod engine;
pub mod error;
pub mod model;
pub mod models;
pub mod oracle;
pub mod particle;
pub mod rng;

pub use engine::{
    abc_emission_weight, calibrate_threshold, filtering_quantiles, EngineOptions, FilterEstimate, Smc2, StateCloud,
    StepDiagnostics, ThetaCloud, ThetaParticle, ThresholdSchedule,
};
pub use error::{Error, Result};
pub use model::{validate_config, CloudStatistics, ConfigViolation, Model, ParamVector, RunConfig};
pub use particle::CalibrationRecord;
pub use rng::{Purpose, RngStream, StreamFactory};
