//! Slot-level link-adaptation simulation toolkit.

pub mod agent;
pub mod baselines;
pub mod channel;
pub mod controller;
pub mod env;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod fqi;
pub mod mcs;
pub mod metrics;
pub mod num;
pub mod phy;
pub mod predictors;

pub use error::{Error, Result};

/// Double-precision policy network, the training default.
pub type Policy = agent::PolicyParams<f64>;
/// Single-precision policy network for inference.
pub type PolicyF32 = agent::PolicyParams<f32>;
/// Double-precision Kalman predictor state.
pub type KalmanState = predictors::kalman::KfState<f64>;
/// Double-precision BLER curve family.
pub type Bler = phy::BlerModel<f64>;
