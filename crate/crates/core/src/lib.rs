//! Multi-phase car-following models with driving-principle audits, phase
//! analysis, analytical oracles and an experiment harness.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod kinematics;
pub mod models;
pub mod numfmt;
pub mod oracles;
pub mod phase;
pub mod principles;
pub mod sim;

pub use error::{Error, Result};
pub use kinematics::{ModelParams, PairState, StepSize, VehicleState};
pub use models::ModelId;
