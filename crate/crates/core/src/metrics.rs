//! Cost of transport and the normalized performance figures used to compare
//! legged robots of different scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Real, GRAVITY};

/// Speeds at or below this make COT undefined, m/s.
pub const MIN_VELOCITY: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("steady-state velocity {0} m/s too small for cost of transport")]
    ZeroVelocity(f64),
    #[error("mass must be > 0, got {0} kg")]
    NonPositiveMass(f64),
}

/// `V·i / (m·g·v_ss)` with `g = 9.81`.
pub fn cost_of_transport<T: Real>(voltage: T, current: T, mass: T, v_ss: T) -> Result<T, MetricsError> {
    if !(mass > T::zero()) {
        return Err(MetricsError::NonPositiveMass(mass.to_f64_lossy()));
    }
    if !(v_ss > lit(MIN_VELOCITY)) {
        return Err(MetricsError::ZeroVelocity(v_ss.to_f64_lossy()));
    }
    Ok(voltage * current / (mass * lit(GRAVITY) * v_ss))
}

/// Body lengths per second.
pub fn normalized_speed<T: Real>(v_ss: T, body_len: T) -> T {
    v_ss / body_len
}

pub fn normalized_payload<T: Real>(payload: T, robot_mass: T) -> T {
    payload / robot_mass
}

/// Normalized speed times normalized payload.
pub fn normalized_workload<T: Real>(ns: T, np: T) -> T {
    ns * np
}

/// Mean current that drains `fraction_used` of `capacity_ah` in `duration_h` hours.
pub fn endurance_projection<T: Real>(capacity_ah: T, fraction_used: T, duration_h: T) -> T {
    fraction_used * capacity_ah / duration_h
}

/// Hours until `capacity_ah` is exhausted at `mean_current`. Infinite at zero draw.
pub fn runtime_remaining<T: Real>(capacity_ah: T, mean_current: T) -> T {
    if mean_current > T::zero() {
        capacity_ah / mean_current
    } else {
        T::infinity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsInput {
    pub voltage: f64,
    pub mean_current: f64,
    /// Robot plus payload, kg.
    pub mass: f64,
    pub v_ss: f64,
    pub body_len: f64,
    pub payload: f64,
    pub robot_mass: f64,
    pub battery_capacity: f64,
}

/// One row in the layout of the cross-robot performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub ground_velocity: f64,
    pub normalized_speed: f64,
    pub turning_rate: Option<f64>,
    pub max_payload: f64,
    pub normalized_payload: f64,
    pub normalized_workload: f64,
    pub cot: Option<f64>,
    /// Hours of operation at `mean_current` from a full battery.
    pub runtime_h: f64,
    pub bus_voltage: f64,
    /// The bus voltage is a configured assumption, not a measurement.
    pub bus_voltage_assumed: bool,
}

impl MetricsRow {
    pub const CSV_HEADER: [&'static str; 10] = [
        "ground_velocity",
        "normalized_speed",
        "turning_rate",
        "max_payload",
        "normalized_payload",
        "normalized_workload",
        "cot",
        "runtime_h",
        "bus_voltage",
        "bus_voltage_assumed",
    ];

    pub fn compute(input: &MetricsInput, turning_rate: Option<f64>) -> Self {
        let ns = normalized_speed(input.v_ss, input.body_len);
        let np = normalized_payload(input.payload, input.robot_mass);
        Self {
            ground_velocity: input.v_ss,
            normalized_speed: ns,
            turning_rate,
            max_payload: input.payload,
            normalized_payload: np,
            normalized_workload: normalized_workload(ns, np),
            cot: cost_of_transport(input.voltage, input.mean_current, input.mass, input.v_ss).ok(),
            runtime_h: runtime_remaining(input.battery_capacity, input.mean_current),
            bus_voltage: input.voltage,
            bus_voltage_assumed: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cot_example() {
        let c: f64 = cost_of_transport(5.0, 0.5, 0.22, 0.18).unwrap();
        // 2.5 / 0.388476
        assert!((c - 6.435_403_988_920_807).abs() < 1e-12, "{c}");
        assert_eq!(cost_of_transport(5.0, 0.0, 0.22, 0.18).unwrap(), 0.0);
        assert!(matches!(
            cost_of_transport(5.0, 0.5, 0.22, 0.0),
            Err(MetricsError::ZeroVelocity(_))
        ));
        assert!(cost_of_transport(5.0, 0.5, 0.0, 0.2).is_err());
    }

    #[test]
    fn normalizations() {
        assert!((normalized_speed(0.43, 0.08) - 5.375f64).abs() < 1e-12);
        assert_eq!(normalized_speed(0.0, 0.08), 0.0);
        assert!((normalized_speed(0.18, 0.08) - 2.25f64).abs() < 1e-12);
        assert_eq!(normalized_payload(0.44, 0.22), 2.0);
        assert_eq!(normalized_payload(9.0, 9.0), 1.0);
        assert_eq!(normalized_workload(5.38, 2.0), 10.76);
        assert_eq!(normalized_workload(3.0, 0.0), 0.0);
        assert_eq!((normalized_workload(2.27, 1.04) * 100.0f64).round() / 100.0, 2.36);
    }

    #[test]
    fn endurance() {
        assert_eq!(endurance_projection(2.0, 0.6, 1.0), 1.2);
        assert_eq!(endurance_projection(2.0, 0.0, 1.0), 0.0);
        assert!((runtime_remaining(2.0, 1.2) - 1.666_666_666_666_666_7f64).abs() < 1e-12);
        assert!(runtime_remaining(2.0, 0.0f64).is_infinite());
    }

    #[test]
    fn row_without_motion_has_no_cot() {
        let input = MetricsInput {
            voltage: 5.0,
            mean_current: 0.4,
            mass: 0.22,
            v_ss: 0.0,
            body_len: 0.08,
            payload: 0.0,
            robot_mass: 0.22,
            battery_capacity: 2.0,
        };
        let row = MetricsRow::compute(&input, None);
        assert_eq!(row.cot, None);
        assert_eq!(row.normalized_speed, 0.0);
    }
}
