//! Position-controlled smart servo: rate-limited proportional tracking, torque
//! saturation, affine current draw and encoder quantization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{clamp, lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActuatorError {
    #[error("torque disabled")]
    TorqueDisabled,
    #[error("angle {0} rad outside [0, 2π)")]
    OutOfRange(f64),
    #[error("invalid actuator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorParams<T> {
    /// Output shaft speed limit, rad/s.
    pub max_speed: T,
    /// N·m at the output shaft.
    pub stall_torque: T,
    pub gear_ratio: T,
    /// Per-motor draw with torque enabled and no load, A.
    pub idle_current: T,
    /// A per N·m of output torque.
    pub torque_current_coeff: T,
    /// Encoder ticks per revolution.
    pub position_resolution: u32,
    /// Proportional tracking gain, 1/s.
    pub kp: T,
    /// Viscous load seen at the output, N·m·s/rad.
    pub damping: T,
    /// Reflected rotor plus link inertia, kg·m².
    pub inertia: T,
}

impl<T: Real> Default for ActuatorParams<T> {
    fn default() -> Self {
        Self {
            max_speed: lit(48.0),
            stall_torque: lit(0.23),
            gear_ratio: lit(77.0),
            idle_current: lit(0.05),
            torque_current_coeff: lit(2.0),
            position_resolution: 4096,
            kp: lit(200.0),
            damping: lit(1e-3),
            inertia: lit(2e-5),
        }
    }
}

impl<T: Real> ActuatorParams<T> {
    pub fn validate(&self) -> Result<(), ActuatorError> {
        let bad = |m: &str| Err(ActuatorError::InvalidParams(m.to_string()));
        if !(self.max_speed > T::zero()) {
            return bad("max_speed must be > 0");
        }
        if !(self.stall_torque > T::zero()) {
            return bad("stall_torque must be > 0");
        }
        if self.position_resolution < 2 {
            return bad("position_resolution must be >= 2");
        }
        if !(self.kp > T::zero()) {
            return bad("kp must be > 0");
        }
        let non_negative = [
            self.gear_ratio,
            self.idle_current,
            self.torque_current_coeff,
            self.damping,
            self.inertia,
        ];
        if non_negative.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return bad("gear_ratio, currents, damping and inertia must be finite and >= 0");
        }
        Ok(())
    }

    /// One encoder tick, rad.
    pub fn quantum(&self) -> T {
        T::TAU() / lit(self.position_resolution as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorState<T> {
    pub position: T,
    pub target: T,
    pub velocity: T,
    pub applied_torque: T,
    pub current: T,
    pub torque_enabled: bool,
}

impl<T: Real> ActuatorState<T> {
    /// Enabled and holding `position`.
    pub fn holding(position: T) -> Self {
        Self {
            position,
            target: position,
            torque_enabled: true,
            ..Self::default()
        }
    }

    /// State after a tick with torque off: position holds, no torque, no current.
    pub fn disabled(self) -> Self {
        Self {
            velocity: T::zero(),
            applied_torque: T::zero(),
            current: T::zero(),
            torque_enabled: false,
            ..self
        }
    }
}

/// Velocity the tracking law asks for this tick: `clamp(kp·(target − position), ±max_speed)`.
pub fn commanded_velocity<T: Real>(s: &ActuatorState<T>, p: &ActuatorParams<T>) -> T {
    clamp(p.kp * (s.target - s.position), -p.max_speed, p.max_speed)
}

/// Advances one servo by `dt` toward its target against `load_torque`.
pub fn step_actuator<T: Real>(
    s: &ActuatorState<T>,
    p: &ActuatorParams<T>,
    dt: T,
    load_torque: T,
) -> Result<ActuatorState<T>, ActuatorError> {
    if !s.torque_enabled {
        return Err(ActuatorError::TorqueDisabled);
    }
    let error = s.target - s.position;
    let v = commanded_velocity(s, p);
    let step = v * dt;
    // Land exactly on the target when the proportional step would reach it.
    let position = if step.abs() >= error.abs() {
        s.target
    } else {
        s.position + step
    };
    let mut next = ActuatorState {
        position,
        target: s.target,
        velocity: v,
        applied_torque: clamp(load_torque, -p.stall_torque, p.stall_torque),
        current: T::zero(),
        torque_enabled: true,
    };
    next.current = current_draw(&next, p);
    Ok(next)
}

pub fn current_draw<T: Real>(s: &ActuatorState<T>, p: &ActuatorParams<T>) -> T {
    if s.torque_enabled {
        p.idle_current + p.torque_current_coeff * s.applied_torque.abs()
    } else {
        T::zero()
    }
}

/// `floor(angle / 2π · resolution)`.
pub fn quantize_position<T: Real>(angle: T, p: &ActuatorParams<T>) -> Result<u32, ActuatorError> {
    if !(angle >= T::zero() && angle < T::TAU()) {
        return Err(ActuatorError::OutOfRange(angle.to_f64_lossy()));
    }
    let res = p.position_resolution;
    let tick = (angle / T::TAU() * lit(res as f64))
        .floor()
        .to_u32()
        .unwrap_or(0);
    Ok(tick.min(res - 1))
}

/// Angle at the start of a tick's bin.
pub fn dequantize_position<T: Real>(tick: u32, p: &ActuatorParams<T>) -> T {
    lit::<T>(tick as f64) * p.quantum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ActuatorParams<f64> {
        ActuatorParams::default()
    }

    #[test]
    fn fixed_point() {
        let s = ActuatorState::holding(1.3);
        let n = step_actuator(&s, &params(), 0.005, 0.0).unwrap();
        assert_eq!(n.position, 1.3);
        assert_eq!(n.velocity, 0.0);
    }

    #[test]
    fn saturates_at_max_speed() {
        let s = ActuatorState {
            target: 10.5,
            ..ActuatorState::holding(0.5)
        };
        let n = step_actuator(&s, &params(), 0.005, 0.0).unwrap();
        assert!((n.position - 0.5 - 0.24).abs() < 1e-15);
        assert_eq!(n.velocity, 48.0);
    }

    #[test]
    fn converges_like_scalar_recurrence() {
        for kp in [64.0, 200.0] {
            let p = ActuatorParams { kp, ..params() };
            let mut s: ActuatorState<f64> = ActuatorState {
                target: 2.0,
                ..ActuatorState::holding(0.2)
            };
            // Reference: e <- e - clamp(kp e, ±vmax) dt, counted until |e| < 1e-6.
            let mut e: f64 = 1.8;
            let mut oracle_steps = 0;
            while e.abs() >= 1e-6 {
                let v = (kp * e).clamp(-48.0, 48.0);
                e = if (v * 0.005).abs() >= e.abs() { 0.0 } else { e - v * 0.005 };
                oracle_steps += 1;
            }
            let mut steps = 0;
            while (s.target - s.position).abs() >= 1e-6 {
                s = step_actuator(&s, &p, 0.005, 0.0).unwrap();
                steps += 1;
                assert!(steps < 10_000);
            }
            assert_eq!(steps, oracle_steps, "kp {kp}");
        }
    }

    #[test]
    fn torque_clamped_and_current() {
        let p = params();
        let s = ActuatorState::holding(1.0);
        let n = step_actuator(&s, &p, 0.005, 1.0).unwrap();
        assert_eq!(n.applied_torque, 0.23);
        assert!((n.current - (0.05 + 2.0 * 0.23)).abs() < 1e-15);
        let idle = step_actuator(&s, &p, 0.005, 0.0).unwrap();
        assert_eq!(current_draw(&idle, &p), 0.05);
        assert_eq!(current_draw(&idle.disabled(), &p), 0.0);
    }

    #[test]
    fn disabled_rejects_step() {
        let s = ActuatorState::holding(1.0).disabled();
        assert_eq!(
            step_actuator(&s, &params(), 0.005, 0.0),
            Err(ActuatorError::TorqueDisabled)
        );
    }

    #[test]
    fn quantize_bounds() {
        let p = params();
        assert_eq!(quantize_position(0.0, &p).unwrap(), 0);
        let below = std::f64::consts::TAU - 1e-12;
        assert_eq!(quantize_position(below, &p).unwrap(), 4095);
        let last = f64::from_bits(std::f64::consts::TAU.to_bits() - 1);
        assert_eq!(quantize_position(last, &p).unwrap(), 4095);
        assert!(quantize_position(std::f64::consts::TAU, &p).is_err());
        assert!(quantize_position(-1e-9, &p).is_err());
        assert!(quantize_position(f64::NAN, &p).is_err());
    }

    #[test]
    fn validate_params() {
        assert!(params().validate().is_ok());
        assert!(ActuatorParams { max_speed: 0.0, ..params() }.validate().is_err());
        assert!(ActuatorParams { stall_torque: -1.0, ..params() }.validate().is_err());
        assert!(ActuatorParams { position_resolution: 1, ..params() }.validate().is_err());
    }
}
