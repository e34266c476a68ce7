//! Live operation: operator commands drive the gait player, targets stream over
//! the simulated link into the world, and state snapshots come back at 30 Hz.
//!
//! Messages are JSON; `schemas/teleop-v1.schema.json` documents both directions.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gait::{GaitKind, GaitParams, GaitPlayer};
use crate::kinematics::{inverse_kinematics, FootPoint};
use crate::link::{LinkConfig, Mode};
use crate::metrics::{cost_of_transport, runtime_remaining};
use crate::sim::{
    battery_fraction, battery_millivolts, jump_episode, JumpReport, Pose, RobotConfig, SimError,
    Simulation, WorldState, JUMP_CROUCH_Y, JUMP_EXTEND_Y,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const STATE_RATE_HZ: u64 = 30;
/// Window for the rolling cost of transport, s.
pub const COT_WINDOW: f64 = 2.0;

const CROUCH_HOLD: f64 = 0.3;
const EXTEND_HOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleopMode {
    Stand,
    #[default]
    Walk,
    Jump,
    TorqueOff,
}

/// Partial gait parameters. `stride_len` is the stride at `forward = ±1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride_len: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift_amp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_amp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stand_height: Option<f64>,
}

impl GaitOverrides {
    pub fn apply(&self, base: &GaitParams<f64>) -> GaitParams<f64> {
        GaitParams {
            stride_len: self.stride_len.unwrap_or(base.stride_len),
            frequency: self.frequency.unwrap_or(base.frequency),
            duty: self.duty.unwrap_or(base.duty),
            lift_amp: self.lift_amp.unwrap_or(base.lift_amp),
            ground_amp: self.ground_amp.unwrap_or(base.ground_amp),
            stand_height: self.stand_height.unwrap_or(base.stand_height),
            ..*base
        }
    }
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeleopCommand {
    #[serde(default = "schema_version")]
    pub v: u32,
    /// `[-1, 1]`, scales the stride; negative backs up.
    #[serde(default)]
    pub forward: f64,
    /// `[-1, 1]`, positive turns left.
    #[serde(default)]
    pub turn: f64,
    #[serde(default)]
    pub gait: GaitKind,
    #[serde(default)]
    pub param_overrides: GaitOverrides,
    #[serde(default)]
    pub mode: TeleopMode,
}

impl Default for TeleopCommand {
    /// Standing still; what the robot does before any client speaks.
    fn default() -> Self {
        Self {
            v: SCHEMA_VERSION,
            forward: 0.0,
            turn: 0.0,
            gait: GaitKind::default(),
            param_overrides: GaitOverrides::default(),
            mode: TeleopMode::Stand,
        }
    }
}

/// A rejected message, with the JSON path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.message.starts_with(&self.path) {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for SchemaError {}

/// Parses and range-checks a command. Geometry-dependent checks happen in
/// [`Session::set_command`].
pub fn command_ingest(json: &str) -> Result<TeleopCommand, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let cmd: TeleopCommand = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        let inner = e.into_inner().to_string();
        // serde_json appends " at line L column C"; the path says more.
        let message = match inner.rfind(" at line ") {
            Some(i) => inner[..i].to_string(),
            None => inner,
        };
        SchemaError { path, message }
    })?;
    cmd.check_ranges()?;
    Ok(cmd)
}

impl TeleopCommand {
    pub fn check_ranges(&self) -> Result<(), SchemaError> {
        if self.v != SCHEMA_VERSION {
            return Err(SchemaError::new(
                "v",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.v),
            ));
        }
        for (name, x) in [("forward", self.forward), ("turn", self.turn)] {
            if !(-1.0..=1.0).contains(&x) {
                return Err(SchemaError::new(name, format!("{name} out of range")));
            }
        }
        Ok(())
    }

    /// Gait parameters and playback direction for this command.
    ///
    /// Side strides mix as `s_max·clamp(forward ∓ turn, −1, 1)`; the pair is then
    /// expressed as a non-negative stride plus the differential `turn` parameter,
    /// with the cycle played backward when `forward < 0`.
    pub fn gait_params(&self, base: &GaitParams<f64>) -> (GaitParams<f64>, bool) {
        let p = GaitParams {
            gait: self.gait,
            turn: 0.0,
            phase_override: None,
            ..self.param_overrides.apply(base)
        };
        match self.mode {
            TeleopMode::Walk => {}
            _ => {
                return (
                    GaitParams {
                        stride_len: 0.0,
                        lift_amp: 0.0,
                        ground_amp: 0.0,
                        ..p
                    },
                    false,
                )
            }
        }
        let reverse = self.forward < 0.0;
        let (f, t) = if reverse {
            (-self.forward, -self.turn)
        } else {
            (self.forward, self.turn)
        };
        let left = (f - t).clamp(-1.0, 1.0);
        let right = (f + t).clamp(-1.0, 1.0);
        let (scale, turn) = if right == 0.0 && left == 0.0 {
            (0.0, 0.0)
        } else if right.abs() > left.abs() || (right.abs() == left.abs() && right > 0.0) {
            (right, (1.0 - left / right) / 2.0)
        } else {
            (left, (right / left - 1.0) / 2.0)
        };
        (
            GaitParams {
                stride_len: p.stride_len * scale,
                turn: turn.clamp(-1.0, 1.0),
                ..p
            },
            reverse,
        )
    }
}

/// One entry of a recorded command timeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    /// Session time the command takes effect, s.
    pub t: f64,
    pub command: TeleopCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub fraction: f64,
    pub millivolts: f64,
    /// At the rolling mean current; absent while nothing draws.
    pub runtime_h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkReport {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
    pub applied: u64,
    pub rejected: u64,
    pub corrupted: u64,
    pub telemetry_received: u64,
    /// State updates a slow client never received.
    pub state_dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub v: u32,
    pub t: f64,
    pub tick: u64,
    pub mode: TeleopMode,
    pub gait: GaitKind,
    pub pose: Pose,
    pub body_height: f64,
    /// Leg by leg, motor 1 then motor 2, rad.
    pub joints: [f64; 8],
    /// A.
    pub currents: [f64; 8],
    /// Forward body speed, m/s.
    pub speed: f64,
    pub yaw_rate: f64,
    /// Over the last [`COT_WINDOW`] seconds; absent when not moving.
    pub cot: Option<f64>,
    pub battery: Battery,
    pub link: LinkReport,
    /// Most recent jump, if any.
    pub jump: Option<JumpReport>,
}

/// Everything the server sends, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    State(StateUpdate),
    Error { v: u32, path: String, message: String },
}

impl From<SchemaError> for ServerMessage {
    fn from(e: SchemaError) -> Self {
        ServerMessage::Error {
            v: SCHEMA_VERSION,
            path: e.path,
            message: e.message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Jump {
    Crouch { until: u64, goal: [f64; 8] },
    Extend { until: u64, goal: [f64; 8] },
}

/// The authoritative world loop for one robot.
#[derive(Debug, Clone)]
pub struct Session {
    sim: Simulation,
    player: GaitPlayer<f64>,
    base: GaitParams<f64>,
    command: TeleopCommand,
    /// Targets handed to the link last tick.
    sent: [f64; 8],
    /// Sent targets slew back onto the gait after a jump or torque-off.
    recovering: bool,
    jump: Option<Jump>,
    last_jump: Option<JumpReport>,
    /// `(t, energy, distance)` per tick.
    window: VecDeque<(f64, f64, f64)>,
    /// Set by the publisher.
    pub state_dropped: u64,
}

impl Session {
    pub fn new(cfg: RobotConfig, base: GaitParams<f64>, link: LinkConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        base.validate_for(&cfg.geom)?;
        let command = TeleopCommand::default();
        let (params, _) = command.gait_params(&base);
        let player = GaitPlayer::new(cfg.geom, params)?;
        let q0 = player.targets()?;
        let sim = Simulation::new(cfg, q0, Some(link))?;
        let w = sim.world();
        let window = VecDeque::from([(w.t, w.energy, w.distance_traveled)]);
        Ok(Self {
            sim,
            player,
            base,
            command,
            sent: q0,
            recovering: false,
            jump: None,
            last_jump: None,
            window,
            state_dropped: 0,
        })
    }

    pub fn config(&self) -> &RobotConfig {
        self.sim.config()
    }

    pub fn base_gait(&self) -> &GaitParams<f64> {
        &self.base
    }

    pub fn world(&self) -> &WorldState {
        self.sim.world()
    }

    pub fn command(&self) -> &TeleopCommand {
        &self.command
    }

    /// Targets sent on the most recent tick.
    pub fn sent_targets(&self) -> &[f64; 8] {
        &self.sent
    }

    /// Last writer wins. The gait blends toward the new parameters from the
    /// current phase.
    pub fn set_command(&mut self, cmd: TeleopCommand) -> Result<(), SchemaError> {
        cmd.check_ranges()?;
        let geom = &self.sim.config().geom;
        let (params, reverse) = cmd.gait_params(&self.base);
        // Validate the full-stride version so a later change of `forward` cannot fail.
        let full = GaitParams {
            gait: cmd.gait,
            ..cmd.param_overrides.apply(&self.base)
        };
        full.validate_for(geom)
            .and_then(|_| params.validate_for(geom))
            .map_err(|e| SchemaError::new("param_overrides", e.to_string()))?;
        self.player
            .retarget(params)
            .map_err(|e| SchemaError::new("param_overrides", e.to_string()))?;
        self.player.set_reverse(reverse);
        if cmd.mode == TeleopMode::Jump && self.command.mode != TeleopMode::Jump && self.jump.is_none() {
            self.start_jump().map_err(|e| SchemaError::new("mode", e.to_string()))?;
        }
        if self.command.mode == TeleopMode::TorqueOff && cmd.mode != TeleopMode::TorqueOff {
            self.recovering = true;
        }
        self.command = cmd;
        Ok(())
    }

    fn start_jump(&mut self) -> Result<(), SimError> {
        let cfg = *self.sim.config();
        self.last_jump = Some(jump_episode(&cfg, JUMP_CROUCH_Y, JUMP_EXTEND_Y)?);
        let pose = |y: f64| -> Result<[f64; 8], SimError> {
            let q = inverse_kinematics(&cfg.geom, FootPoint::new(cfg.geom.midline_x(), y)).map_err(
                |source| SimError::Kinematics {
                    leg: crate::gait::Leg::FrontLeft,
                    source,
                },
            )?;
            Ok([q.theta1, q.theta2, q.theta1, q.theta2, q.theta1, q.theta2, q.theta1, q.theta2])
        };
        let hz = (1.0 / cfg.dt).round() as u64;
        let now = self.sim.world().tick;
        self.jump = Some(Jump::Crouch {
            until: now + (CROUCH_HOLD * hz as f64) as u64,
            goal: pose(JUMP_CROUCH_Y)?,
        });
        // The extension pose is computed up front so a bad geometry fails here.
        pose(JUMP_EXTEND_Y)?;
        Ok(())
    }

    fn next_targets(&mut self) -> Result<([f64; 8], Mode), SimError> {
        let cfg = *self.sim.config();
        let max_step = cfg.act.max_speed * cfg.dt;
        let toward = |from: &[f64; 8], to: &[f64; 8]| {
            let mut out = *from;
            for (o, t) in out.iter_mut().zip(to) {
                *o += (t - *o).clamp(-max_step, max_step);
            }
            out
        };
        let tick = self.sim.world().tick;
        if let Some(j) = self.jump {
            match j {
                Jump::Crouch { until, goal } => {
                    if tick >= until {
                        let q = inverse_kinematics(
                            &cfg.geom,
                            FootPoint::new(cfg.geom.midline_x(), JUMP_EXTEND_Y),
                        )
                        .map_err(|source| SimError::Kinematics {
                            leg: crate::gait::Leg::FrontLeft,
                            source,
                        })?;
                        let hz = (1.0 / cfg.dt).round();
                        self.jump = Some(Jump::Extend {
                            until: tick + (EXTEND_HOLD * hz) as u64,
                            goal: [q.theta1, q.theta2, q.theta1, q.theta2, q.theta1, q.theta2, q.theta1, q.theta2],
                        });
                    }
                    return Ok((toward(&self.sent, &goal), Mode::Stream));
                }
                Jump::Extend { until, goal } => {
                    if tick >= until {
                        self.jump = None;
                        self.recovering = true;
                    }
                    return Ok((toward(&self.sent, &goal), Mode::Stream));
                }
            }
        }
        if self.command.mode == TeleopMode::TorqueOff {
            let held = self.sim.world().positions();
            return Ok((held, Mode::TorqueOff));
        }
        let gait = self.player.targets()?;
        if self.recovering {
            let next = toward(&self.sent, &gait);
            if next == gait {
                self.recovering = false;
            }
            return Ok((next, Mode::Stream));
        }
        Ok((gait, Mode::Stream))
    }

    /// One tick. Returns a snapshot on ticks that fall on the 30 Hz publishing grid.
    pub fn step(&mut self) -> Result<Option<StateUpdate>, SimError> {
        let (targets, mode) = self.next_targets()?;
        let dt = self.sim.config().dt;
        self.sim.tick(&targets, mode)?;
        self.sent = targets;
        self.player.advance(dt);

        let w = self.sim.world();
        self.window.push_back((w.t, w.energy, w.distance_traveled));
        while self
            .window
            .front()
            .is_some_and(|(t, _, _)| *t < w.t - COT_WINDOW - 1e-9)
        {
            self.window.pop_front();
        }

        let hz = (1.0 / dt).round() as u64;
        let n = w.tick;
        let publish = n * STATE_RATE_HZ / hz != (n - 1) * STATE_RATE_HZ / hz;
        Ok(publish.then(|| self.state()))
    }

    /// Snapshot of the current state.
    pub fn state(&self) -> StateUpdate {
        let cfg = self.sim.config();
        let w = self.sim.world();
        let (t0, e0, d0) = *self.window.front().expect("window holds the current tick");
        let span = w.t - t0;
        let (cot, mean_current) = if span > 0.0 {
            let power = (w.energy - e0) / span;
            let speed = (w.distance_traveled - d0) / span;
            (
                cost_of_transport(power, 1.0, cfg.total_mass(), speed).ok(),
                power / cfg.bus_voltage,
            )
        } else {
            (None, w.total_current())
        };
        let fraction = battery_fraction(cfg, w.charge);
        let runtime = runtime_remaining(cfg.battery_capacity * fraction, mean_current);
        let stats = self.sim.link_stats().unwrap_or_default();
        let mode = if self.jump.is_some() {
            TeleopMode::Jump
        } else {
            self.command.mode
        };
        StateUpdate {
            v: SCHEMA_VERSION,
            t: w.t,
            tick: w.tick,
            mode,
            gait: self.player.params().gait,
            pose: w.pose,
            body_height: w.body_height,
            joints: w.positions(),
            currents: w.currents(),
            speed: w.twist.vx,
            yaw_rate: w.twist.wz,
            cot,
            battery: Battery {
                fraction,
                millivolts: battery_millivolts(fraction),
                runtime_h: runtime.is_finite().then_some(runtime),
            },
            link: LinkReport {
                sent: stats.sent,
                dropped: stats.dropped,
                delivered: stats.delivered,
                applied: stats.applied,
                rejected: stats.rejected,
                corrupted: stats.corrupted,
                telemetry_received: stats.telemetry_received,
                state_dropped: self.state_dropped,
            },
            jump: self.last_jump,
        }
    }
}

/// Replays a command timeline as fast as possible and returns every published
/// snapshot. Entries must be sorted by `t`.
pub fn replay(
    cfg: RobotConfig,
    base: GaitParams<f64>,
    link: LinkConfig,
    script: &[ScriptEntry],
    duration: f64,
) -> Result<Vec<StateUpdate>, ReplayError> {
    if script.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(ReplayError::Unsorted);
    }
    let mut session = Session::new(cfg, base, link)?;
    let ticks = (duration / cfg.dt).round() as u64;
    let mut next = 0;
    let mut out = Vec::new();
    for _ in 0..ticks {
        let t = session.world().t;
        while next < script.len() && script[next].t <= t + 1e-12 {
            session
                .set_command(script[next].command)
                .map_err(|e| ReplayError::Command { index: next, source: e })?;
            next += 1;
        }
        if let Some(s) = session.step()? {
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("script entries are not sorted by t")]
    Unsorted,
    #[error("script entry {index}: {source}")]
    Command { index: usize, source: SchemaError },
    #[error(transparent)]
    Sim(#[from] SimError),
}
