use legtwin::actuator::{current_draw, dequantize_position, quantize_position, step_actuator};
use legtwin::{ActuatorParams, ActuatorState};
use proptest::prelude::*;

const DT: f64 = 0.005;

proptest! {
    #[test]
    fn never_faster_than_the_limit(
        start in 0.0..6.0f64,
        targets in prop::collection::vec(0.0..6.0f64, 1..60),
        load in -1.0..1.0f64,
    ) {
        let p = ActuatorParams::default();
        let mut s = ActuatorState::holding(start);
        for t in targets {
            s.target = t;
            let next = step_actuator(&s, &p, DT, load).unwrap();
            prop_assert!((next.position - s.position).abs() / DT <= p.max_speed + 1e-12);
            prop_assert!(next.velocity.abs() <= p.max_speed);
            prop_assert!(next.applied_torque.abs() <= p.stall_torque);
            prop_assert!(next.current >= 0.0);
            s = next;
        }
    }

    #[test]
    fn error_shrinks_toward_a_fixed_target(start in 0.0..6.0f64, target in 0.0..6.0f64, kp in 1.0..400.0f64) {
        let p = ActuatorParams { kp, ..ActuatorParams::default() };
        let mut s = ActuatorState::holding(start);
        s.target = target;
        let mut err = (target - start).abs();
        for _ in 0..200 {
            s = step_actuator(&s, &p, DT, 0.0).unwrap();
            let e = (target - s.position).abs();
            prop_assert!(e <= err);
            err = e;
        }
    }

    #[test]
    fn quantization_round_trip_within_a_tick(angle in 0.0..std::f64::consts::TAU, bits in 1u32..16) {
        let p = ActuatorParams { position_resolution: 1 << bits, ..ActuatorParams::default() };
        let tick = quantize_position(angle, &p).unwrap();
        prop_assert!(tick < p.position_resolution);
        let back = dequantize_position(tick, &p);
        prop_assert!(angle - back >= -1e-12 && angle - back <= p.quantum() + 1e-12);
    }

    #[test]
    fn disabled_draws_nothing(pos in 0.0..6.0f64, torque in -1.0..1.0f64) {
        let p = ActuatorParams::default();
        let s = ActuatorState { applied_torque: torque, ..ActuatorState::holding(pos) }.disabled();
        prop_assert_eq!(current_draw(&s, &p), 0.0);
        prop_assert!(step_actuator(&s, &p, DT, 0.0).is_err());
    }
}

#[test]
fn encoder_bounds() {
    let p = ActuatorParams::default();
    assert_eq!(quantize_position(0.0, &p).unwrap(), 0);
    let below = f64::from_bits(std::f64::consts::TAU.to_bits() - 1);
    assert_eq!(quantize_position(below, &p).unwrap(), 4095);
    assert!(quantize_position(std::f64::consts::TAU, &p).is_err());
    assert!(quantize_position(-1e-12, &p).is_err());
}
