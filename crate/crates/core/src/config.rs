//! TOML configuration: `[geometry]`, `[actuator]`, `[robot]`, `[gait]` and `[link]`.
//! Every key is optional; units are meters, radians, seconds, kilograms, volts.
//!
//! ```toml
//! [geometry]
//! motor_spacing = 0.02
//! proximal_len = 0.04
//! distal_len = 0.06
//! joint_min = 0.17
//! joint_max = 2.97
//! elbow = "knees_outward"
//!
//! [robot]
//! mass = 0.22
//! payload = 0.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::ActuatorParams;
use crate::gait::GaitParams;
use crate::kinematics::{ElbowConfig, JointLimits, LegGeometry};
use crate::link::LinkConfig;
use crate::sim::RobotConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub motor_spacing: f64,
    pub proximal_len: f64,
    pub distal_len: f64,
    /// Applies to both motors.
    pub joint_min: f64,
    pub joint_max: f64,
    pub elbow: ElbowConfig,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self::from(&LegGeometry::default())
    }
}

impl From<&LegGeometry<f64>> for GeometrySection {
    fn from(g: &LegGeometry<f64>) -> Self {
        Self {
            motor_spacing: g.motor_spacing,
            proximal_len: g.proximal_len,
            distal_len: g.distal_len,
            joint_min: g.limits[0].min,
            joint_max: g.limits[0].max,
            elbow: g.elbow,
        }
    }
}

impl GeometrySection {
    pub fn build(&self) -> Result<LegGeometry<f64>, ConfigError> {
        LegGeometry::new(
            self.motor_spacing,
            self.proximal_len,
            self.distal_len,
            JointLimits {
                min: self.joint_min,
                max: self.joint_max,
            },
            self.elbow,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    pub body_len: f64,
    pub track_width: f64,
    pub mass: f64,
    pub payload: f64,
    pub bus_voltage: f64,
    pub battery_capacity: f64,
    pub dt: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        let r = RobotConfig::default();
        Self {
            body_len: r.body_len,
            track_width: r.track_width,
            mass: r.mass,
            payload: r.payload,
            bus_voltage: r.bus_voltage,
            battery_capacity: r.battery_capacity,
            dt: r.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub geometry: GeometrySection,
    pub actuator: ActuatorParams<f64>,
    pub robot: RobotSection,
    pub gait: GaitParams<f64>,
    pub link: LinkConfig,
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.robot_config()?;
        cfg.gait
            .validate_for(&cfg.geometry.build()?)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.link
            .command
            .validate()
            .and(cfg.link.telemetry.validate())
            .map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn robot_config(&self) -> Result<RobotConfig, ConfigError> {
        let r = &self.robot;
        let cfg = RobotConfig {
            body_len: r.body_len,
            track_width: r.track_width,
            mass: r.mass,
            payload: r.payload,
            bus_voltage: r.bus_voltage,
            battery_capacity: r.battery_capacity,
            dt: r.dt,
            geom: self.geometry.build()?,
            act: self.actuator,
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
