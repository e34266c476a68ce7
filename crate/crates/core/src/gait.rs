//! Sinusoid foot trajectories, per-leg phase offsets and joint schedules.
//!
//! A gait cycle is split into a ground phase (`phi < duty`) and a lift phase.
//! Each sub-phase sweeps the foot linearly in `x` while `y` follows half a sine:
//! `y = y0 + A_ground·sin(πx̂)` on the ground, `y = y0 − A_lift·sin(πx̂)` in the air.
//!
//! `stride_len` is the distance the body travels per cycle. In stance the foot
//! sweeps `duty·stride_len` backwards relative to the body in `duty/f` seconds, so a
//! no-slip body moves at `stride_len·f`.
//!
//! Foot points here are relative to the linkage midline (`x = d/2` in the leg
//! frame); [`to_leg_frame`] shifts them for kinematics.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    inverse_kinematics, FootPoint, JointPair, KinematicsError, LegGeometry,
};
use crate::scalar::{clamp, lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitKind {
    Walk,
    #[default]
    Trot,
    Bound,
    Pronk,
}

impl GaitKind {
    pub const ALL: [GaitKind; 4] = [GaitKind::Walk, GaitKind::Trot, GaitKind::Bound, GaitKind::Pronk];

    pub fn as_str(self) -> &'static str {
        match self {
            GaitKind::Walk => "walk",
            GaitKind::Trot => "trot",
            GaitKind::Bound => "bound",
            GaitKind::Pronk => "pronk",
        }
    }
}

impl fmt::Display for GaitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GaitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GaitKind::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown gait {s:?}, expected one of walk, trot, bound, pronk"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    FrontLeft,
    FrontRight,
    BackLeft,
    BackRight,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FrontLeft, Leg::FrontRight, Leg::BackLeft, Leg::BackRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_left(self) -> bool {
        matches!(self, Leg::FrontLeft | Leg::BackLeft)
    }

    pub fn is_front(self) -> bool {
        matches!(self, Leg::FrontLeft | Leg::FrontRight)
    }

    pub fn short(self) -> &'static str {
        match self {
            Leg::FrontLeft => "FL",
            Leg::FrontRight => "FR",
            Leg::BackLeft => "BL",
            Leg::BackRight => "BR",
        }
    }
}

impl fmt::Display for Leg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Phase offsets in cycle fractions, ordered FL, FR, BL, BR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegPhaseMap<T> {
    pub offsets: [T; 4],
}

impl<T: Real> LegPhaseMap<T> {
    pub fn new(offsets: [T; 4]) -> Result<Self, GaitError> {
        if offsets.iter().any(|o| !(*o >= T::zero() && *o < T::one())) {
            return Err(GaitError::InvalidParams(
                "phase offsets must be in [0, 1)".into(),
            ));
        }
        Ok(Self { offsets })
    }

    pub fn get(&self, leg: Leg) -> T {
        self.offsets[leg.index()]
    }
}

pub fn leg_phase_offsets<T: Real>(gait: GaitKind) -> LegPhaseMap<T> {
    let o = |a: f64, b: f64, c: f64, d: f64| LegPhaseMap {
        offsets: [lit(a), lit(b), lit(c), lit(d)],
    };
    match gait {
        GaitKind::Trot => o(0.0, 0.5, 0.5, 0.0),
        GaitKind::Walk => o(0.0, 0.5, 0.75, 0.25),
        GaitKind::Bound => o(0.0, 0.0, 0.5, 0.5),
        GaitKind::Pronk => o(0.0, 0.0, 0.0, 0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaitError {
    #[error("invalid gait parameters: {0}")]
    InvalidParams(String),
    #[error("trajectory unreachable{} at sample {sample}: {source}", .leg.map(|l| format!(" for leg {l}")).unwrap_or_default())]
    UnreachableTrajectory {
        leg: Option<Leg>,
        sample: usize,
        source: KinematicsError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitParams<T> {
    /// Body travel per cycle, m.
    pub stride_len: T,
    /// Cycles per second.
    pub frequency: T,
    /// Fraction of the cycle in ground phase.
    pub duty: T,
    pub lift_amp: T,
    pub ground_amp: T,
    /// Resting foot extension `y0`, m.
    pub stand_height: T,
    pub gait: GaitKind,
    /// Differential stride command in `[-1, 1]`; positive turns left (counterclockwise).
    pub turn: T,
    /// Replaces the gait's standard offsets when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_override: Option<LegPhaseMap<T>>,
}

impl<T: Real> Default for GaitParams<T> {
    fn default() -> Self {
        Self {
            stride_len: lit(0.03),
            frequency: lit(2.0),
            duty: lit(0.5),
            lift_amp: lit(0.015),
            ground_amp: lit(0.002),
            stand_height: lit(0.07),
            gait: GaitKind::Trot,
            turn: T::zero(),
            phase_override: None,
        }
    }
}

impl<T: Real> GaitParams<T> {
    pub fn validate(&self) -> Result<(), GaitError> {
        let bad = |m: &str| Err(GaitError::InvalidParams(m.to_string()));
        let finite = [
            self.stride_len,
            self.frequency,
            self.duty,
            self.lift_amp,
            self.ground_amp,
            self.stand_height,
            self.turn,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        if self.stride_len < T::zero() {
            return bad("stride_len must be >= 0");
        }
        if self.frequency <= T::zero() {
            return bad("frequency must be > 0");
        }
        if !(self.duty > T::zero() && self.duty < T::one()) {
            return bad("duty must be in (0, 1)");
        }
        if self.lift_amp < T::zero() || self.ground_amp < T::zero() {
            return bad("amplitudes must be >= 0");
        }
        if self.stand_height - self.lift_amp <= T::zero() {
            return bad("stand_height - lift_amp must be > 0");
        }
        if self.turn.abs() > T::one() {
            return bad("turn must be in [-1, 1]");
        }
        if let Some(map) = self.phase_override {
            LegPhaseMap::new(map.offsets)?;
        }
        Ok(())
    }

    /// Validates against a geometry: every point of the cycle of every leg must be reachable.
    pub fn validate_for(&self, geom: &LegGeometry<T>) -> Result<(), GaitError> {
        self.validate()?;
        let (left, right) = turning_adjust(self);
        for stride in [left, right] {
            build_trajectory_with_stride(geom, self, stride, 64)?;
        }
        Ok(())
    }

    pub fn phase_map(&self) -> LegPhaseMap<T> {
        self.phase_override
            .unwrap_or_else(|| leg_phase_offsets(self.gait))
    }

    /// Seconds per cycle.
    pub fn period(&self) -> T {
        T::one() / self.frequency
    }
}

/// Midline-relative foot target for a cycle phase.
pub fn foot_point_at_phase<T: Real>(p: &GaitParams<T>, phi: T) -> FootPoint<T> {
    foot_point_with_stride(p, p.stride_len, phi)
}

/// As [`foot_point_at_phase`] with an explicit (possibly negative) stride.
pub fn foot_point_with_stride<T: Real>(p: &GaitParams<T>, stride: T, phi: T) -> FootPoint<T> {
    let half = lit::<T>(0.5);
    let sweep = p.duty * stride;
    if phi < p.duty {
        let u = phi / p.duty;
        FootPoint::new(
            sweep * half - sweep * u,
            p.stand_height + p.ground_amp * (T::PI() * u).sin(),
        )
    } else {
        let u = (phi - p.duty) / (T::one() - p.duty);
        FootPoint::new(
            -sweep * half + sweep * u,
            p.stand_height - p.lift_amp * (T::PI() * u).sin(),
        )
    }
}

/// Shifts a midline-relative point into the leg frame.
pub fn to_leg_frame<T: Real>(geom: &LegGeometry<T>, p: FootPoint<T>) -> FootPoint<T> {
    FootPoint::new(p.x + geom.midline_x(), p.y)
}

/// Per-side effective strides `(left, right)`.
///
/// `turn = 0` keeps both at `s`; `turn = +1` gives `(−s, +s)`, an in-place
/// counterclockwise turn. The mapping is odd and monotone in `turn`.
pub fn turning_adjust<T: Real>(p: &GaitParams<T>) -> (T, T) {
    let t = clamp(p.turn, -T::one(), T::one());
    let two = lit::<T>(2.0);
    let s = p.stride_len;
    (
        s * (T::one() - two * t).min(T::one()),
        s * (T::one() + two * t).min(T::one()),
    )
}

/// One sampled cycle in leg-frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FootTrajectory<T> {
    /// `samples_per_cycle + 1` points; the last repeats the first phase so the loop is explicit.
    pub samples: Vec<FootPoint<T>>,
    pub dt: T,
}

impl<T: Real> FootTrajectory<T> {
    pub fn samples_per_cycle(&self) -> usize {
        self.samples.len() - 1
    }

    /// Samples of one period, without the closing duplicate.
    pub fn cycle(&self) -> &[FootPoint<T>] {
        &self.samples[..self.samples.len() - 1]
    }
}

pub fn build_stride_trajectory<T: Real>(
    geom: &LegGeometry<T>,
    p: &GaitParams<T>,
    samples_per_cycle: usize,
) -> Result<FootTrajectory<T>, GaitError> {
    build_trajectory_with_stride(geom, p, p.stride_len, samples_per_cycle)
}

fn build_trajectory_with_stride<T: Real>(
    geom: &LegGeometry<T>,
    p: &GaitParams<T>,
    stride: T,
    samples_per_cycle: usize,
) -> Result<FootTrajectory<T>, GaitError> {
    p.validate()?;
    if samples_per_cycle < 4 {
        return Err(GaitError::InvalidParams(
            "samples_per_cycle must be >= 4".into(),
        ));
    }
    let n = lit::<T>(samples_per_cycle as f64);
    let samples = (0..=samples_per_cycle)
        .map(|i| {
            let phi = lit::<T>(i as f64) / n;
            let foot = to_leg_frame(geom, foot_point_with_stride(p, stride, phi));
            inverse_kinematics(geom, foot)
                .map(|_| foot)
                .map_err(|source| GaitError::UnreachableTrajectory {
                    leg: None,
                    sample: i,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FootTrajectory {
        samples,
        dt: T::one() / (p.frequency * n),
    })
}

/// Joint targets for each leg over one cycle, indexed `[leg][sample]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointSchedule<T> {
    pub legs: [Vec<JointPair<T>>; 4],
    /// Foot targets matching `legs`, leg frame.
    pub feet: [Vec<FootPoint<T>>; 4],
    pub dt: T,
}

impl<T: Real> JointSchedule<T> {
    pub fn len(&self) -> usize {
        self.legs[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The eight motor targets at one sample, ordered leg by leg (θ1, θ2).
    pub fn targets(&self, sample: usize) -> [T; 8] {
        let mut out = [T::zero(); 8];
        for (leg, series) in self.legs.iter().enumerate() {
            let q = series[sample % series.len()];
            out[2 * leg] = q.theta1;
            out[2 * leg + 1] = q.theta2;
        }
        out
    }
}

pub fn gait_joint_schedule<T: Real>(
    geom: &LegGeometry<T>,
    p: &GaitParams<T>,
    samples_per_cycle: usize,
) -> Result<JointSchedule<T>, GaitError> {
    let (s_left, s_right) = turning_adjust(p);
    let left = build_trajectory_with_stride(geom, p, s_left, samples_per_cycle)?;
    let right = build_trajectory_with_stride(geom, p, s_right, samples_per_cycle)?;
    let map = p.phase_map();
    let n = samples_per_cycle;
    let mut legs: [Vec<JointPair<T>>; 4] = Default::default();
    let mut feet: [Vec<FootPoint<T>>; 4] = Default::default();
    for leg in Leg::ALL {
        let traj = if leg.is_left() { &left } else { &right };
        let shift = (map.get(leg) * lit(n as f64))
            .round()
            .to_usize()
            .unwrap_or(0)
            % n;
        let cycle = traj.cycle();
        for i in 0..n {
            let foot = cycle[(i + shift) % n];
            let q = inverse_kinematics(geom, foot).map_err(|source| {
                GaitError::UnreachableTrajectory {
                    leg: Some(leg),
                    sample: i,
                    source,
                }
            })?;
            legs[leg.index()].push(q);
            feet[leg.index()].push(foot);
        }
    }
    Ok(JointSchedule {
        legs,
        feet,
        dt: left.dt,
    })
}

/// Bounded slew rates used when a [`GaitPlayer`] blends toward new parameters, per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendRates<T> {
    pub stride_len: T,
    pub frequency: T,
    pub duty: T,
    pub amplitude: T,
    pub stand_height: T,
    pub turn: T,
    /// Phase-offset change, cycles per second.
    pub offset: T,
}

impl<T: Real> Default for BlendRates<T> {
    fn default() -> Self {
        Self {
            stride_len: lit(0.1),
            frequency: lit(4.0),
            duty: lit(0.5),
            amplitude: lit(0.05),
            stand_height: lit(0.05),
            turn: lit(2.0),
            offset: lit(1.0),
        }
    }
}

/// Evaluates the gait tick by tick from a continuous phase accumulator.
///
/// Works for frequencies whose period is not a whole number of ticks, and blends
/// toward retargeted parameters without resetting the phase.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitPlayer<T> {
    geom: LegGeometry<T>,
    current: GaitParams<T>,
    target: GaitParams<T>,
    offsets: [T; 4],
    phase: T,
    reverse: bool,
    pub rates: BlendRates<T>,
}

impl<T: Real> GaitPlayer<T> {
    pub fn new(geom: LegGeometry<T>, params: GaitParams<T>) -> Result<Self, GaitError> {
        params.validate_for(&geom)?;
        Ok(Self {
            geom,
            current: params,
            target: params,
            offsets: params.phase_map().offsets,
            phase: T::zero(),
            reverse: false,
            rates: BlendRates::default(),
        })
    }

    pub fn geometry(&self) -> &LegGeometry<T> {
        &self.geom
    }

    pub fn params(&self) -> &GaitParams<T> {
        &self.current
    }

    pub fn target(&self) -> &GaitParams<T> {
        &self.target
    }

    /// Global cycle phase in `[0, 1)`.
    pub fn phase(&self) -> T {
        self.phase
    }

    pub fn offsets(&self) -> [T; 4] {
        self.offsets
    }

    /// Runs the cycle backward in time, so stance feet sweep forward and the body
    /// backs up. Switching keeps the phase.
    pub fn set_reverse(&mut self, reverse: bool) {
        self.reverse = reverse;
    }

    pub fn reversed(&self) -> bool {
        self.reverse
    }

    /// Sets new target parameters; the player slews toward them in [`Self::advance`].
    pub fn retarget(&mut self, params: GaitParams<T>) -> Result<(), GaitError> {
        params.validate_for(&self.geom)?;
        self.target = params;
        self.current.gait = params.gait;
        self.current.phase_override = params.phase_override;
        Ok(())
    }

    /// Switches to new parameters immediately, keeping the phase.
    pub fn set_params(&mut self, params: GaitParams<T>) -> Result<(), GaitError> {
        params.validate_for(&self.geom)?;
        self.current = params;
        self.target = params;
        self.offsets = params.phase_map().offsets;
        Ok(())
    }

    /// Leg-frame foot targets at the current phase.
    pub fn feet(&self) -> [FootPoint<T>; 4] {
        let (s_left, s_right) = turning_adjust(&self.current);
        Leg::ALL.map(|leg| {
            let phi = wrap_unit(self.phase + self.offsets[leg.index()]);
            let stride = if leg.is_left() { s_left } else { s_right };
            to_leg_frame(&self.geom, foot_point_with_stride(&self.current, stride, phi))
        })
    }

    /// Joint targets at the current phase.
    pub fn joints(&self) -> Result<[JointPair<T>; 4], GaitError> {
        let feet = self.feet();
        let mut out = [JointPair::default(); 4];
        for leg in Leg::ALL {
            out[leg.index()] = inverse_kinematics(&self.geom, feet[leg.index()]).map_err(
                |source| GaitError::UnreachableTrajectory {
                    leg: Some(leg),
                    sample: 0,
                    source,
                },
            )?;
        }
        Ok(out)
    }

    /// The eight motor targets at the current phase.
    pub fn targets(&self) -> Result<[T; 8], GaitError> {
        let joints = self.joints()?;
        let mut out = [T::zero(); 8];
        for (i, q) in joints.iter().enumerate() {
            out[2 * i] = q.theta1;
            out[2 * i + 1] = q.theta2;
        }
        Ok(out)
    }

    /// Moves time forward by `dt`, blending parameters toward the target.
    pub fn advance(&mut self, dt: T) {
        let r = self.rates;
        let c = &mut self.current;
        let t = &self.target;
        c.stride_len = slew(c.stride_len, t.stride_len, r.stride_len * dt);
        c.frequency = slew(c.frequency, t.frequency, r.frequency * dt);
        c.duty = slew(c.duty, t.duty, r.duty * dt);
        c.lift_amp = slew(c.lift_amp, t.lift_amp, r.amplitude * dt);
        c.ground_amp = slew(c.ground_amp, t.ground_amp, r.amplitude * dt);
        c.stand_height = slew(c.stand_height, t.stand_height, r.stand_height * dt);
        c.turn = slew(c.turn, t.turn, r.turn * dt);
        let goal = t.phase_map().offsets;
        for (o, g) in self.offsets.iter_mut().zip(goal) {
            // Shortest way around the circle.
            let delta = wrap_unit(g - *o + lit(0.5)) - lit(0.5);
            let step = r.offset * dt;
            *o = if delta.abs() <= step {
                g
            } else {
                wrap_unit(*o + step * delta.signum())
            };
        }
        let dphi = c.frequency * dt;
        self.phase = wrap_unit(if self.reverse { self.phase - dphi } else { self.phase + dphi });
    }

    /// True once the blended parameters equal the target.
    pub fn settled(&self) -> bool {
        let c = &self.current;
        let t = &self.target;
        c.stride_len == t.stride_len
            && c.frequency == t.frequency
            && c.duty == t.duty
            && c.lift_amp == t.lift_amp
            && c.ground_amp == t.ground_amp
            && c.stand_height == t.stand_height
            && c.turn == t.turn
            && self.offsets == t.phase_map().offsets
    }
}

fn slew<T: Real>(from: T, to: T, max_step: T) -> T {
    if (to - from).abs() <= max_step {
        to
    } else {
        from + max_step * (to - from).signum()
    }
}

fn wrap_unit<T: Real>(x: T) -> T {
    let w = x - x.floor();
    if w >= T::one() {
        T::zero()
    } else {
        w
    }
}
