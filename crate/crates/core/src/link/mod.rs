//! Command/telemetry wire protocol and a simulated wireless hop.

pub mod channel;
pub mod crc;
pub mod frame;
pub mod stream;

use serde::{Deserialize, Serialize};

pub use channel::{Channel, ChannelModel, ChannelStats};
pub use crc::crc16_ccitt_false;
pub use frame::{
    decode_command, decode_telemetry, encode_command, encode_telemetry, CommandFrame, FrameError,
    Mode, TelemetryFrame, COMMAND_LEN, TELEMETRY_LEN,
};
pub use stream::{
    decode_angle, encode_angle, is_newer, receiver_apply, stream_scheduler, Receiver,
    StreamScheduler, Verdict,
};

use crate::actuator::ActuatorParams;

/// Command streaming rate, Hz.
pub const COMMAND_RATE_HZ: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Host to robot.
    pub command: ChannelModel,
    /// Robot to host.
    pub telemetry: ChannelModel,
    /// One telemetry frame every this many ticks.
    pub telemetry_decimation: u32,
    pub rate_hz: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self::symmetric(ChannelModel::ideal())
    }
}

impl LinkConfig {
    /// Same loss and timing both ways, independent random streams.
    pub fn symmetric(model: ChannelModel) -> Self {
        Self {
            command: model,
            telemetry: ChannelModel {
                seed: model.seed ^ 0x5EED_7E1E,
                ..model
            },
            telemetry_decimation: 4,
            rate_hz: COMMAND_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
    pub applied: u64,
    pub rejected: u64,
    pub corrupted: u64,
    pub telemetry_sent: u64,
    pub telemetry_dropped: u64,
    pub telemetry_received: u64,
}

/// Sender, both channel directions and the robot-side receiver, stepped on one virtual clock.
#[derive(Debug, Clone)]
pub struct Link {
    cfg: LinkConfig,
    scheduler: StreamScheduler,
    cmd: Channel<[u8; COMMAND_LEN]>,
    tlm: Channel<[u8; TELEMETRY_LEN]>,
    receiver: Receiver,
    corrupted: u64,
    telemetry_received: u64,
    params: ActuatorParams<f64>,
}

impl Link {
    pub fn new(cfg: LinkConfig, params: ActuatorParams<f64>) -> Self {
        Self {
            cfg,
            scheduler: StreamScheduler::new(cfg.rate_hz, COMMAND_RATE_HZ, params),
            cmd: Channel::new(cfg.command),
            tlm: Channel::new(cfg.telemetry),
            receiver: Receiver::new(),
            corrupted: 0,
            telemetry_received: 0,
            params,
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ActuatorParams<f64> {
        &self.params
    }

    /// Host side: frames and submits targets if a frame is due at `tick`.
    pub fn host_send(&mut self, tick: u64, targets: &[f64; 8], mode: Mode) -> Option<CommandFrame> {
        let frame = self.scheduler.poll(tick, targets, mode)?;
        let bytes = encode_command(&frame).expect("scheduler emits in-range ticks");
        self.cmd.submit(tick, bytes);
        Some(frame)
    }

    /// Robot side: takes delivered frames, returns the applied frame if it changed this tick.
    pub fn robot_receive(&mut self, tick: u64) -> Option<CommandFrame> {
        let mut changed = false;
        for bytes in self.cmd.deliver(tick) {
            match decode_command(&bytes) {
                Ok(frame) => changed |= self.receiver.apply(frame) == Verdict::Accept,
                Err(_) => self.corrupted += 1,
            }
        }
        changed.then(|| *self.receiver.applied().expect("accepted frame"))
    }

    /// Robot side: sends telemetry if the decimation counter says so.
    pub fn robot_send_telemetry(&mut self, tick: u64, frame: &TelemetryFrame) -> bool {
        let every = self.cfg.telemetry_decimation.max(1) as u64;
        if !tick.is_multiple_of(every) {
            return false;
        }
        let bytes = encode_telemetry(frame).expect("telemetry positions in range");
        self.tlm.submit(tick, bytes);
        true
    }

    /// Host side: telemetry that arrived by `tick`.
    pub fn host_receive(&mut self, tick: u64) -> Vec<TelemetryFrame> {
        let frames: Vec<_> = self
            .tlm
            .deliver(tick)
            .iter()
            .filter_map(|b| decode_telemetry(b).ok())
            .collect();
        self.telemetry_received += frames.len() as u64;
        frames
    }

    pub fn receiver(&self) -> &Receiver {
        &self.receiver
    }

    pub fn stats(&self) -> LinkStats {
        LinkStats {
            sent: self.cmd.stats.submitted,
            dropped: self.cmd.stats.dropped,
            delivered: self.cmd.stats.delivered,
            applied: self.receiver.stats.accepted,
            rejected: self.receiver.stats.rejected,
            corrupted: self.corrupted,
            telemetry_sent: self.tlm.stats.submitted,
            telemetry_dropped: self.tlm.stats.dropped,
            telemetry_received: self.telemetry_received,
        }
    }
}
