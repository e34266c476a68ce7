//! Fixed-timestep kinematic world: servos track streamed joint targets, stance
//! feet do not slip, and the body twist follows from the stance-foot motion.
//!
//! World frame: `X` forward, `Y` left, yaw counterclockwise. Body frame: front leg
//! midlines at `+body_len/2`, left foot lines at `+track_width/2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{commanded_velocity, step_actuator, ActuatorParams, ActuatorState};
use crate::gait::{GaitError, GaitParams, GaitPlayer, Leg};
use crate::kinematics::{
    forward_kinematics, inverse_kinematics, jacobian, FootPoint, JointPair, KinematicsError,
    LegGeometry,
};
use crate::link::{
    decode_angle, encode_angle, Link, LinkConfig, LinkStats, Mode, TelemetryFrame,
};
use crate::metrics::cost_of_transport;
use crate::scalar::GRAVITY;

/// Physics and command tick, s.
pub const DEFAULT_DT: f64 = 0.005;
/// A foot within this of the lowest foot is in stance, m.
pub const STANCE_BAND: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid robot configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("leg {leg}: {source}")]
    Kinematics { leg: Leg, source: KinematicsError },
    #[error(transparent)]
    Gait(#[from] GaitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// Distance between front and back linkage midpoints, m.
    pub body_len: f64,
    /// Distance between left and right foot lines, m.
    pub track_width: f64,
    /// Robot mass without payload, kg.
    pub mass: f64,
    pub payload: f64,
    /// Assumed supply voltage at the servos, V.
    pub bus_voltage: f64,
    /// Combined battery capacity, A·h.
    pub battery_capacity: f64,
    pub dt: f64,
    pub geom: LegGeometry<f64>,
    pub act: ActuatorParams<f64>,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            body_len: 0.08,
            track_width: 0.07,
            mass: 0.22,
            payload: 0.0,
            bus_voltage: 5.0,
            battery_capacity: 2.0,
            dt: DEFAULT_DT,
            geom: LegGeometry::default(),
            act: ActuatorParams::default(),
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be > 0");
        }
        if !(self.body_len > 0.0) || !(self.track_width > 0.0) {
            return bad("body_len and track_width must be > 0");
        }
        if !(self.payload >= 0.0) {
            return bad("payload must be >= 0");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if !(self.bus_voltage > 0.0) || !(self.battery_capacity > 0.0) {
            return bad("bus_voltage and battery_capacity must be > 0");
        }
        self.geom
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.act
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.mass + self.payload
    }

    /// Body-frame `(x, y)` of a leg's linkage midline.
    pub fn mount(&self, leg: Leg) -> (f64, f64) {
        let x = if leg.is_front() { self.body_len / 2.0 } else { -self.body_len / 2.0 };
        let y = if leg.is_left() { self.track_width / 2.0 } else { -self.track_width / 2.0 };
        (x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub yaw: f64,
}

/// Body-frame planar twist.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub t: f64,
    pub pose: Pose,
    /// Motor-line height above ground, m.
    pub body_height: f64,
    pub twist: Twist,
    /// Ordered leg by leg, motor 1 then motor 2.
    pub joints: [ActuatorState<f64>; 8],
    /// Leg-frame foot positions.
    pub feet: [FootPoint<f64>; 4],
    pub foot_contacts: [bool; 4],
    pub distance_traveled: f64,
    /// J.
    pub energy: f64,
    /// A·s.
    pub charge: f64,
}

impl WorldState {
    /// At rest on flat ground with joints holding `q`.
    pub fn standing(cfg: &RobotConfig, q: [f64; 8]) -> Result<Self, SimError> {
        let joints = q.map(ActuatorState::holding);
        let feet = feet_of(&cfg.geom, &joints)?;
        let (contacts, support) = stance(&feet);
        Ok(Self {
            tick: 0,
            t: 0.0,
            pose: Pose::default(),
            body_height: support,
            twist: Twist::default(),
            joints,
            feet,
            foot_contacts: contacts,
            distance_traveled: 0.0,
            energy: 0.0,
            charge: 0.0,
        })
    }

    pub fn total_current(&self) -> f64 {
        self.joints.iter().map(|j| j.current).sum()
    }

    pub fn joint_pair(&self, leg: Leg) -> JointPair<f64> {
        let i = leg.index();
        JointPair::new(self.joints[2 * i].position, self.joints[2 * i + 1].position)
    }

    pub fn positions(&self) -> [f64; 8] {
        self.joints.map(|j| j.position)
    }

    pub fn currents(&self) -> [f64; 8] {
        self.joints.map(|j| j.current)
    }
}

fn feet_of(geom: &LegGeometry<f64>, joints: &[ActuatorState<f64>; 8]) -> Result<[FootPoint<f64>; 4], SimError> {
    let mut feet = [FootPoint::default(); 4];
    for leg in Leg::ALL {
        let i = leg.index();
        let q = JointPair::new(joints[2 * i].position, joints[2 * i + 1].position);
        feet[i] = forward_kinematics(geom, q).map_err(|source| SimError::Kinematics { leg, source })?;
    }
    Ok(feet)
}

/// Stance flags and support height (the largest extension).
fn stance(feet: &[FootPoint<f64>; 4]) -> ([bool; 4], f64) {
    let support = feet.iter().map(|f| f.y).fold(f64::NEG_INFINITY, f64::max);
    (feet.map(|f| f.y >= support - STANCE_BAND), support)
}

/// No-slip twist from longitudinal stance-foot velocities `(lateral offset, ẋ)` and the
/// feet's body-frame `x`. Solves `ẋ_i = −vx + ω·y_i` in least squares, then picks
/// `vy` to minimize lateral slip.
fn stance_twist(samples: &[(f64, f64, f64)]) -> Option<Twist> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean_y = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_xd = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mean_x = samples.iter().map(|s| s.2).sum::<f64>() / n;
    let syy: f64 = samples.iter().map(|s| (s.0 - mean_y).powi(2)).sum();
    let syx: f64 = samples.iter().map(|s| (s.0 - mean_y) * (s.1 - mean_xd)).sum();
    let wz = if syy > 1e-12 { syx / syy } else { 0.0 };
    let vx = -(mean_xd - wz * mean_y);
    Some(Twist {
        vx,
        vy: -wz * mean_x,
        wz,
    })
}

/// Advances the world by one tick toward `commands`. With `enabled` false the servos
/// go limp and hold position.
pub fn step_world(
    w: &WorldState,
    cfg: &RobotConfig,
    commands: &[f64; 8],
    enabled: bool,
    dt: f64,
) -> Result<WorldState, SimError> {
    let geom = &cfg.geom;
    let n_stance = w.foot_contacts.iter().filter(|c| **c).count().max(1);
    let weight_per_leg = cfg.total_mass() * GRAVITY / n_stance as f64;

    let mut joints = w.joints;
    for leg in Leg::ALL {
        let i = leg.index();
        let jac = jacobian(geom, w.joint_pair(leg)).ok();
        for k in 0..2 {
            let j = &mut joints[2 * i + k];
            if !enabled {
                *j = j.disabled();
                continue;
            }
            j.torque_enabled = true;
            j.target = commands[2 * i + k];
            let v = commanded_velocity(j, &cfg.act);
            let gravity = match (&jac, w.foot_contacts[i]) {
                (Some(jac), true) => weight_per_leg * jac.m[1][k],
                _ => 0.0,
            };
            let load = gravity + cfg.act.damping * v + cfg.act.inertia * (v - j.velocity) / dt;
            *j = step_actuator(j, &cfg.act, dt, load).expect("torque enabled");
        }
    }

    let feet = feet_of(geom, &joints)?;
    let (contacts, support) = stance(&feet);

    let mid = geom.midline_x();
    let samples: Vec<(f64, f64, f64)> = Leg::ALL
        .iter()
        .filter(|leg| w.foot_contacts[leg.index()] && contacts[leg.index()])
        .map(|&leg| {
            let i = leg.index();
            let (mx, my) = cfg.mount(leg);
            (my, (feet[i].x - w.feet[i].x) / dt, mx + feet[i].x - mid)
        })
        .collect();
    let twist = stance_twist(&samples).unwrap_or(w.twist);

    let pose = integrate(w.pose, twist, dt);
    let step_len = (pose.x - w.pose.x).hypot(pose.y - w.pose.y);
    let current: f64 = joints.iter().map(|j| j.current).sum();
    let tick = w.tick + 1;
    Ok(WorldState {
        tick,
        t: tick as f64 * dt,
        pose,
        body_height: support.max(0.0),
        twist,
        joints,
        feet,
        foot_contacts: contacts,
        distance_traveled: w.distance_traveled + step_len,
        energy: w.energy + cfg.bus_voltage * current * dt,
        charge: w.charge + current * dt,
    })
}

/// Exact SE(2) integration of a constant body twist.
fn integrate(p: Pose, t: Twist, dt: f64) -> Pose {
    let th = t.wz * dt;
    let (dx, dy) = if th.abs() < 1e-9 {
        (t.vx * dt - 0.5 * t.vy * dt * th, t.vy * dt + 0.5 * t.vx * dt * th)
    } else {
        let (s, c) = th.sin_cos();
        (
            (t.vx * s - t.vy * (1.0 - c)) / t.wz,
            (t.vx * (1.0 - c) + t.vy * s) / t.wz,
        )
    };
    let (sy, cy) = p.yaw.sin_cos();
    Pose {
        x: p.x + cy * dx - sy * dy,
        y: p.y + sy * dx + cy * dy,
        yaw: p.yaw + th,
    }
}

/// Host, link and robot stepped together. Both the headless episode and the live
/// session drive the world through [`Simulation::tick`].
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: RobotConfig,
    world: WorldState,
    link: Option<Link>,
    /// Targets the robot is currently tracking, as applied after the link.
    applied: [f64; 8],
    enabled: bool,
}

impl Simulation {
    pub fn new(cfg: RobotConfig, q0: [f64; 8], link: Option<LinkConfig>) -> Result<Self, SimError> {
        cfg.validate()?;
        let link = link.map(|l| Link::new(l, cfg.act));
        let applied = match &link {
            // The robot boots holding its encoder readings.
            Some(_) => q0.map(|a| decode_angle(encode_angle(a, &cfg.act), &cfg.act)),
            None => q0,
        };
        let world = WorldState::standing(&cfg, applied)?;
        Ok(Self {
            cfg,
            world,
            link,
            applied,
            enabled: true,
        })
    }

    pub fn config(&self) -> &RobotConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn link_stats(&self) -> Option<LinkStats> {
        self.link.as_ref().map(Link::stats)
    }

    pub fn link(&self) -> Option<&Link> {
        self.link.as_ref()
    }

    /// Targets the robot is tracking after the link.
    pub fn applied_targets(&self) -> &[f64; 8] {
        &self.applied
    }

    /// One 200 Hz tick: send `targets`, carry them over the link, step the world.
    pub fn tick(&mut self, targets: &[f64; 8], mode: Mode) -> Result<&WorldState, SimError> {
        let tick = self.world.tick;
        match &mut self.link {
            Some(link) => {
                link.host_send(tick, targets, mode);
                if let Some(frame) = link.robot_receive(tick) {
                    self.apply(frame.mode, frame.positions.map(|p| decode_angle(p, &self.cfg.act)));
                }
            }
            None => self.apply(mode, *targets),
        }
        let next = step_world(&self.world, &self.cfg, &self.applied, self.enabled, self.cfg.dt)?;
        self.world = next;
        if let Some(link) = &mut self.link {
            let tlm = telemetry_frame(&self.world, &self.cfg, tick);
            link.robot_send_telemetry(tick, &tlm);
            let _ = link.host_receive(tick);
        }
        Ok(&self.world)
    }

    fn apply(&mut self, mode: Mode, targets: [f64; 8]) {
        match mode {
            Mode::Stream => {
                self.enabled = true;
                self.applied = targets;
            }
            Mode::Hold => {
                self.enabled = true;
            }
            Mode::TorqueOff => {
                self.enabled = false;
                self.applied = self.world.positions();
            }
        }
    }
}

/// Remaining battery fraction after `charge` A·s.
pub fn battery_fraction(cfg: &RobotConfig, charge: f64) -> f64 {
    (1.0 - charge / (cfg.battery_capacity * 3600.0)).clamp(0.0, 1.0)
}

/// Pack voltage estimate, linear between 3.3 V empty and 4.2 V full, mV.
pub fn battery_millivolts(fraction: f64) -> f64 {
    3300.0 + 900.0 * fraction.clamp(0.0, 1.0)
}

fn telemetry_frame(w: &WorldState, cfg: &RobotConfig, seq_echo: u64) -> TelemetryFrame {
    let frac = battery_fraction(cfg, w.charge);
    TelemetryFrame {
        seq_echo: seq_echo as u16,
        positions: w.positions().map(|a| encode_angle(a, &cfg.act)),
        currents: w.currents().map(|c| (c * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16),
        battery_mv: battery_millivolts(frac).round() as u16,
        battery_pct: (frac * 100.0).round() as u8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub yaw: f64,
    /// Forward body speed, m/s.
    pub v: f64,
    pub current_total: f64,
}

impl TraceSample {
    pub const CSV_HEADER: [&'static str; 6] = ["t", "X", "Y", "yaw", "v", "current_total"];

    fn of(w: &WorldState) -> Self {
        Self {
            t: w.t,
            x: w.pose.x,
            y: w.pose.y,
            yaw: w.pose.yaw,
            v: w.twist.vx,
            current_total: w.total_current(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub gait: GaitParams<f64>,
    pub duration: f64,
    pub dt: f64,
    pub ticks: u64,
    pub seed: u64,
    /// Mean forward body speed over the last half, m/s.
    pub v_ss: f64,
    /// Mean lateral body speed over the last half, m/s.
    pub v_lateral: f64,
    /// Mean yaw rate over the last half, rad/s.
    pub yaw_rate: f64,
    /// `charge / duration`, A.
    pub mean_current: f64,
    /// Mean current over the last half, A.
    pub steady_current: f64,
    /// Absent when the robot does not move forward.
    pub cot: Option<f64>,
    pub bus_voltage: f64,
    pub bus_voltage_assumed: bool,
    pub mass: f64,
    pub robot_mass: f64,
    pub payload: f64,
    pub body_len: f64,
    pub battery_capacity: f64,
    pub distance: f64,
    pub energy: f64,
    pub charge: f64,
    pub final_pose: Pose,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceSample>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpisodeOptions {
    /// Stream commands through a simulated link; its seeds are replaced by the episode seed.
    pub link: Option<LinkConfig>,
    pub record_trace: bool,
}

/// Straight or turning gait episode with an ideal (direct) command path.
pub fn run_episode(
    cfg: &RobotConfig,
    gait: &GaitParams<f64>,
    duration: f64,
    seed: u64,
) -> Result<EpisodeReport, SimError> {
    run_episode_with(cfg, gait, duration, seed, &EpisodeOptions::default())
}

pub fn run_episode_with(
    cfg: &RobotConfig,
    gait: &GaitParams<f64>,
    duration: f64,
    seed: u64,
    opts: &EpisodeOptions,
) -> Result<EpisodeReport, SimError> {
    cfg.validate()?;
    gait.validate()?;
    if !(duration * gait.frequency >= 5.0 - 1e-9) {
        return Err(SimError::InvalidArgument(format!(
            "duration {duration} s is shorter than 5 gait cycles"
        )));
    }
    let mut player = GaitPlayer::new(cfg.geom, *gait)?;
    let link = opts.link.map(|l| LinkConfig {
        command: crate::link::ChannelModel { seed, ..l.command },
        telemetry: crate::link::ChannelModel {
            seed: seed ^ 0x5EED_7E1E,
            ..l.telemetry
        },
        ..l
    });
    let mut sim = Simulation::new(*cfg, player.targets()?, link)?;
    let ticks = (duration / cfg.dt).round() as u64;
    let steady_from = ticks / 2;
    let mut trace = opts.record_trace.then(|| Vec::with_capacity(ticks as usize + 1));
    if let Some(tr) = &mut trace {
        tr.push(TraceSample::of(sim.world()));
    }
    let (mut sum_vx, mut sum_vy, mut sum_wz) = (0.0, 0.0, 0.0);
    let mut steady_charge = 0.0;
    for k in 0..ticks {
        let targets = player.targets()?;
        let before = sim.world().charge;
        let w = sim.tick(&targets, Mode::Stream)?;
        player.advance(cfg.dt);
        if k >= steady_from {
            sum_vx += w.twist.vx;
            sum_vy += w.twist.vy;
            sum_wz += w.twist.wz;
            steady_charge += w.charge - before;
        }
        if let Some(tr) = &mut trace {
            tr.push(TraceSample::of(w));
        }
    }
    let n = (ticks - steady_from) as f64;
    let w = sim.world();
    let total_t = ticks as f64 * cfg.dt;
    let v_ss = sum_vx / n;
    let mean_current = w.charge / total_t;
    let cot = cost_of_transport(cfg.bus_voltage, mean_current, cfg.total_mass(), v_ss).ok();
    Ok(EpisodeReport {
        gait: *gait,
        duration: total_t,
        dt: cfg.dt,
        ticks,
        seed,
        v_ss,
        v_lateral: sum_vy / n,
        yaw_rate: sum_wz / n,
        mean_current,
        steady_current: steady_charge / (n * cfg.dt),
        cot,
        bus_voltage: cfg.bus_voltage,
        bus_voltage_assumed: true,
        mass: cfg.total_mass(),
        robot_mass: cfg.mass,
        payload: cfg.payload,
        body_len: cfg.body_len,
        battery_capacity: cfg.battery_capacity,
        distance: w.distance_traveled,
        energy: w.energy,
        charge: w.charge,
        final_pose: w.pose,
        link: sim.link_stats(),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub crouch_y: f64,
    pub extend_y: f64,
    /// Vertical body speed at liftoff, m/s.
    pub takeoff_speed: f64,
    /// `takeoff_speed² / 2g`, m above the takeoff height.
    pub apex_height: f64,
    /// Apex from stepping the flight at the episode `dt`, m above the takeoff height.
    pub apex_integrated: f64,
    /// Motor-line height at liftoff, m.
    pub takeoff_height: f64,
    /// Peak motor-line height minus the crouched height, m.
    pub rise_from_crouch: f64,
    pub stroke_time: f64,
    pub flight_time: f64,
}

/// Default crouch for [`jump_episode`]: a short push near full extension, m.
pub const JUMP_CROUCH_Y: f64 = 0.09;
pub const JUMP_EXTEND_Y: f64 = 0.098;

/// Substep for the push-off stroke, s. A 48 rad/s stroke spans only a few 5 ms ticks.
const JUMP_SUBSTEP: f64 = 1e-5;

/// `v² / 2g`.
pub fn ballistic_apex(takeoff_speed: f64) -> f64 {
    takeoff_speed * takeoff_speed / (2.0 * GRAVITY)
}

/// Pronk jump: all feet under the midline, crouched at `crouch_y`, driven toward
/// `extend_y` with every joint at full speed. The body rides the feet while the
/// extension rate decelerates slower than g and flies ballistically after.
pub fn jump_episode(cfg: &RobotConfig, crouch_y: f64, extend_y: f64) -> Result<JumpReport, SimError> {
    cfg.validate()?;
    if !(crouch_y < extend_y) {
        return Err(SimError::InvalidArgument(format!(
            "crouch_y {crouch_y} must be below extend_y {extend_y}"
        )));
    }
    let geom = &cfg.geom;
    let mid = geom.midline_x();
    let ik = |y: f64| {
        inverse_kinematics(geom, FootPoint::new(mid, y)).map_err(|source| SimError::Kinematics {
            leg: Leg::FrontLeft,
            source,
        })
    };
    let start = ik(crouch_y)?;
    let goal = ik(extend_y)?;
    let vmax = cfg.act.max_speed;
    let h = JUMP_SUBSTEP;

    // Push-off. All four legs move identically, so one leg stands for the body.
    let mut q = start;
    let mut height = crouch_y;
    let mut v_prev = 0.0;
    let mut t = 0.0;
    let (takeoff_speed, takeoff_height) = loop {
        let toward = |a: f64, b: f64| (b - a).clamp(-vmax * h, vmax * h);
        let dq = (toward(q.theta1, goal.theta1), toward(q.theta2, goal.theta2));
        let rates = [dq.0 / h, dq.1 / h];
        let v = jacobian(geom, q)
            .map_err(|source| SimError::Kinematics { leg: Leg::FrontLeft, source })?
            .apply(rates)[1];
        if (v_prev > 0.0 && (v_prev - v) / h > GRAVITY) || (dq.0 == 0.0 && dq.1 == 0.0) {
            break (v_prev.max(0.0), height);
        }
        q = JointPair::new(q.theta1 + dq.0, q.theta2 + dq.1);
        height = forward_kinematics(geom, q)
            .map_err(|source| SimError::Kinematics { leg: Leg::FrontLeft, source })?
            .y;
        v_prev = v;
        t += h;
        if t > 10.0 {
            return Err(SimError::InvalidArgument("push-off did not terminate".into()));
        }
    };
    let stroke_time = t;

    // Flight, exact for constant gravity at each step.
    let dt = cfg.dt;
    let (mut z, mut vz, mut peak) = (takeoff_height, takeoff_speed, takeoff_height);
    let mut flight = 0;
    loop {
        z += vz * dt - 0.5 * GRAVITY * dt * dt;
        vz -= GRAVITY * dt;
        flight += 1;
        peak = peak.max(z);
        if z <= takeoff_height || flight > 100_000 {
            break;
        }
    }
    Ok(JumpReport {
        crouch_y,
        extend_y,
        takeoff_speed,
        apex_height: ballistic_apex(takeoff_speed),
        apex_integrated: peak - takeoff_height,
        takeoff_height,
        rise_from_crouch: peak - crouch_y,
        stroke_time,
        flight_time: flight as f64 * dt,
    })
}
