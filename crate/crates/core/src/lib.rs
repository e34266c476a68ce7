//! Simulation and analysis core for a small quadruped with five-bar legs.
//!
//! The geometry, gait, actuator and metrics code is generic over [`Real`];
//! the crate root re-exports `f64` aliases for everyday use.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuator;
pub mod config;
pub mod gait;
pub mod harness;
pub mod kinematics;
pub mod link;
pub mod metrics;
pub mod scalar;
pub mod sim;
pub mod teleop;

pub use scalar::{Real, GRAVITY};

pub type LegGeometry = kinematics::LegGeometry<f64>;
pub type JointPair = kinematics::JointPair<f64>;
pub type FootPoint = kinematics::FootPoint<f64>;
pub type JointLimits = kinematics::JointLimits<f64>;
pub use kinematics::{ElbowConfig, KinematicsError};

pub type GaitParams = gait::GaitParams<f64>;
pub use gait::{GaitError, GaitKind, Leg};

pub type ActuatorParams = actuator::ActuatorParams<f64>;
pub type ActuatorState = actuator::ActuatorState<f64>;
pub use actuator::ActuatorError;
pub use config::{Config, ConfigError};
pub use sim::{EpisodeReport, RobotConfig, SimError, WorldState};
