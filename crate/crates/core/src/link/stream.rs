//! Host-side fixed-rate frame scheduler and robot-side latest-wins receiver.

use serde::{Deserialize, Serialize};

use super::frame::{CommandFrame, Mode};
use crate::actuator::{dequantize_position, quantize_position, ActuatorParams};

/// True if `incoming` is ahead of `latest` in 16-bit wrapping order:
/// `(incoming − latest) mod 2¹⁶ ∈ [1, 2¹⁵)`.
pub fn is_newer(incoming: u16, latest: u16) -> bool {
    let d = incoming.wrapping_sub(latest);
    (1..0x8000).contains(&d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReceiverStats {
    pub accepted: u64,
    pub rejected: u64,
}

/// Applies only frames newer than the last applied one; holds otherwise.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    latest: Option<u16>,
    applied: Option<CommandFrame>,
    pub stats: ReceiverStats,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn latest_seq(&self) -> Option<u16> {
        self.latest
    }

    /// The most recently applied frame.
    pub fn applied(&self) -> Option<&CommandFrame> {
        self.applied.as_ref()
    }

    pub fn apply(&mut self, frame: CommandFrame) -> Verdict {
        let fresh = self.latest.is_none_or(|l| is_newer(frame.seq, l));
        if fresh {
            self.latest = Some(frame.seq);
            self.applied = Some(frame);
            self.stats.accepted += 1;
            Verdict::Accept
        } else {
            self.stats.rejected += 1;
            Verdict::Reject
        }
    }
}

/// `receiver_apply` as a pure predicate.
pub fn receiver_apply(latest_seq: u16, incoming: &CommandFrame) -> Verdict {
    if is_newer(incoming.seq, latest_seq) {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

/// Emits command frames at `rate_hz` on a virtual clock ticking at `tick_hz`.
#[derive(Debug, Clone)]
pub struct StreamScheduler {
    pub rate_hz: u32,
    pub tick_hz: u32,
    next_seq: u16,
    emitted: u64,
    params: ActuatorParams<f64>,
}

impl StreamScheduler {
    pub fn new(rate_hz: u32, tick_hz: u32, params: ActuatorParams<f64>) -> Self {
        assert!(rate_hz > 0 && tick_hz > 0, "rates must be positive");
        Self {
            rate_hz,
            tick_hz,
            next_seq: 0,
            emitted: 0,
            params,
        }
    }

    pub fn frames_sent(&self) -> u64 {
        self.emitted
    }

    /// Frame for virtual tick `tick` if one is due. `targets` are joint angles in rad,
    /// wrapped into `[0, 2π)` before quantization.
    pub fn poll(&mut self, tick: u64, targets: &[f64; 8], mode: Mode) -> Option<CommandFrame> {
        // Due whenever floor(tick·rate / tick_hz) advances; at most one per tick.
        let (r, h) = (self.rate_hz as u64, self.tick_hz as u64);
        if tick != 0 && (tick * r) / h == ((tick - 1) * r) / h {
            return None;
        }
        let frame = CommandFrame {
            seq: self.next_seq,
            mode,
            positions: targets.map(|a| encode_angle(a, &self.params)),
        };
        self.next_seq = self.next_seq.wrapping_add(1);
        self.emitted += 1;
        Some(frame)
    }
}

/// Wraps into `[0, 2π)` and quantizes to a tick.
pub fn encode_angle(angle: f64, params: &ActuatorParams<f64>) -> u16 {
    let wrapped = angle.rem_euclid(std::f64::consts::TAU);
    let wrapped = if wrapped >= std::f64::consts::TAU { 0.0 } else { wrapped };
    quantize_position(wrapped, params).unwrap_or(0) as u16
}

pub fn decode_angle(tick: u16, params: &ActuatorParams<f64>) -> f64 {
    dequantize_position(tick as u32, params)
}

/// Frames for `ticks` consecutive ticks of a precomputed schedule, one per tick.
pub fn stream_scheduler(
    targets: &[[f64; 8]],
    rate_hz: u32,
    ticks: u64,
    params: &ActuatorParams<f64>,
) -> Vec<CommandFrame> {
    assert!(!targets.is_empty(), "schedule must be non-empty");
    let mut s = StreamScheduler::new(rate_hz, rate_hz, *params);
    (0..ticks)
        .filter_map(|t| s.poll(t, &targets[t as usize % targets.len()], Mode::Stream))
        .collect()
}
