//! Batch runs: parameter sweeps, figure data and CSV output.
//!
//! CSV files have a header row, fixed column order and floats printed with nine
//! significant digits.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::GeometrySection;
use crate::gait::{gait_joint_schedule, GaitError, GaitKind, GaitParams, Leg};
use crate::kinematics::{
    forward_kinematics, workspace_area_compare, workspace_sample, JointPair, KinematicsError,
    LegGeometry, WorkspaceSample,
};
use crate::sim::{run_episode, RobotConfig, SimError, TraceSample};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("unknown figure {0:?} (expected workspace, gaitplot or sweep)")]
    UnknownFigure(String),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Exponent after rounding to 9 digits.
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g9).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub stride_len: Vec<f64>,
    pub frequency: Vec<f64>,
    pub duty: Vec<f64>,
    pub gait: Vec<GaitKind>,
    /// kg.
    pub payload: Vec<f64>,
    /// Per episode, s.
    pub duration: f64,
    pub seed: u64,
    /// Amplitudes, height and turn shared by every row.
    pub base: GaitParams<f64>,
    pub output: Option<PathBuf>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            stride_len: vec![0.03],
            frequency: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            duty: vec![0.5],
            gait: vec![GaitKind::Trot],
            payload: vec![0.0, 0.22],
            duration: 10.0,
            seed: 0,
            base: GaitParams::default(),
            output: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let axes = [
            ("stride_len", self.stride_len.len()),
            ("frequency", self.frequency.len()),
            ("duty", self.duty.len()),
            ("gait", self.gait.len()),
            ("payload", self.payload.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, n)| *n == 0) {
            return Err(HarnessError::InvalidSpec(format!("axis {name} is empty")));
        }
        if !(self.duration > 0.0) {
            return Err(HarnessError::InvalidSpec("duration must be > 0".into()));
        }
        Ok(())
    }

    /// Size of the cartesian product.
    pub fn len(&self) -> usize {
        self.stride_len.len() * self.frequency.len() * self.duty.len() * self.gait.len() * self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Combinations in output order: gait, payload, duty, stride, frequency (fastest).
    pub fn combinations(&self) -> Vec<SweepPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &gait in &self.gait {
            for &payload in &self.payload {
                for &duty in &self.duty {
                    for &stride_len in &self.stride_len {
                        for &frequency in &self.frequency {
                            out.push(SweepPoint {
                                stride_len,
                                frequency,
                                duty,
                                gait,
                                payload,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub stride_len: f64,
    pub frequency: f64,
    pub duty: f64,
    pub gait: GaitKind,
    pub payload: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(flatten)]
    pub point: SweepPoint,
    pub v_ss: Option<f64>,
    pub mean_current: Option<f64>,
    pub cot: Option<f64>,
    /// Fastest joint rate the schedule asks for, rad/s.
    pub peak_joint_speed: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 10] = [
        "stride_len",
        "frequency",
        "duty",
        "gait",
        "payload",
        "v_ss",
        "mean_current",
        "cot",
        "peak_joint_speed",
        "error",
    ];

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn record(&self) -> [String; 10] {
        let p = &self.point;
        [
            fmt_g9(p.stride_len),
            fmt_g9(p.frequency),
            fmt_g9(p.duty),
            p.gait.to_string(),
            fmt_g9(p.payload),
            opt(self.v_ss),
            opt(self.mean_current),
            opt(self.cot),
            opt(self.peak_joint_speed),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Peak joint rate over one cycle sampled at 400 points, rad/s.
pub fn peak_joint_speed(geom: &LegGeometry<f64>, gait: &GaitParams<f64>) -> Result<f64, GaitError> {
    let n = 400;
    let sched = gait_joint_schedule(geom, gait, n)?;
    let mut peak: f64 = 0.0;
    for series in &sched.legs {
        for i in 0..n {
            let (a, b) = (series[i], series[(i + 1) % n]);
            let d = (b.theta1 - a.theta1).abs().max((b.theta2 - a.theta2).abs());
            peak = peak.max(d / sched.dt);
        }
    }
    Ok(peak)
}

fn sweep_row(cfg: &RobotConfig, spec: &SweepSpec, point: SweepPoint) -> SweepRow {
    let gait = GaitParams {
        stride_len: point.stride_len,
        frequency: point.frequency,
        duty: point.duty,
        gait: point.gait,
        ..spec.base
    };
    let cfg = RobotConfig {
        payload: point.payload,
        ..*cfg
    };
    let result = gait
        .validate_for(&cfg.geom)
        .map_err(SimError::from)
        .and_then(|_| run_episode(&cfg, &gait, spec.duration, spec.seed))
        .and_then(|r| Ok((r, peak_joint_speed(&cfg.geom, &gait)?)));
    match result {
        Ok((r, peak)) => SweepRow {
            point,
            v_ss: Some(r.v_ss),
            mean_current: Some(r.mean_current),
            cot: r.cot,
            peak_joint_speed: Some(peak),
            error: None,
        },
        Err(e) => SweepRow {
            point,
            v_ss: None,
            mean_current: None,
            cot: None,
            peak_joint_speed: None,
            error: Some(e.to_string()),
        },
    }
}

/// One row per combination, in [`SweepSpec::combinations`] order. Rows run in
/// parallel; a failing combination is reported in its `error` column.
pub fn sweep(cfg: &RobotConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>, HarnessError> {
    spec.validate()?;
    cfg.validate()?;
    Ok(spec
        .combinations()
        .into_par_iter()
        .map(|p| sweep_row(cfg, spec, p))
        .collect())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SweepRow::CSV_HEADER)?;
    for r in rows {
        out.write_record(r.record())?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Header `theta1,theta2,x,y,manipulability`.
pub fn write_workspace_csv<W: Write>(sample: &WorkspaceSample<f64>, w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["theta1", "theta2", "x", "y", "manipulability"])?;
    for p in &sample.points {
        out.write_record([p.q.theta1, p.q.theta2, p.foot.x, p.foot.y, p.manipulability].map(fmt_g9))?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &[TraceSample], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TraceSample::CSV_HEADER)?;
    for s in trace {
        out.write_record([s.t, s.x, s.y, s.yaw, s.v, s.current_total].map(fmt_g9))?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaitPlotRow {
    pub t: f64,
    pub leg: Leg,
    /// Gait phase of this leg, cycles.
    pub phi: f64,
    /// Leg-frame foot target, m.
    pub x: f64,
    pub y: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// One cycle of every leg's foot target and joint angles.
pub fn gait_plot(
    geom: &LegGeometry<f64>,
    gait: &GaitParams<f64>,
    samples_per_cycle: usize,
) -> Result<Vec<GaitPlotRow>, GaitError> {
    let n = samples_per_cycle;
    let sched = gait_joint_schedule(geom, gait, n)?;
    let map = gait.phase_map();
    let mut rows = Vec::with_capacity(4 * n);
    for i in 0..n {
        for leg in Leg::ALL {
            let shift = (map.get(leg) * n as f64).round() as usize % n;
            let q = sched.legs[leg.index()][i];
            let foot = sched.feet[leg.index()][i];
            rows.push(GaitPlotRow {
                t: i as f64 * sched.dt,
                leg,
                phi: ((i + shift) % n) as f64 / n as f64,
                x: foot.x,
                y: foot.y,
                theta1: q.theta1,
                theta2: q.theta2,
            });
        }
    }
    Ok(rows)
}

pub fn write_gait_plot_csv<W: Write>(rows: &[GaitPlotRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "leg", "phi", "x", "y", "theta1", "theta2"])?;
    for r in rows {
        out.write_record([
            fmt_g9(r.t),
            r.leg.short().to_string(),
            fmt_g9(r.phi),
            fmt_g9(r.x),
            fmt_g9(r.y),
            fmt_g9(r.theta1),
            fmt_g9(r.theta2),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Workspace,
    GaitPlot,
    Sweep,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Workspace, Figure::GaitPlot, Figure::Sweep];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Workspace => "workspace",
            Figure::GaitPlot => "gaitplot",
            Figure::Sweep => "sweep",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Figure {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Figure::ALL
            .into_iter()
            .find(|f| f.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| HarnessError::UnknownFigure(s.to_string()))
    }
}

/// Joint grid per axis for workspace figures.
pub const WORKSPACE_GRID: usize = 200;
pub const GAIT_PLOT_SAMPLES: usize = 100;

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, HarnessError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(io_err(path))
}

/// Writes the CSVs for one figure into `out_dir` and returns their paths.
///
/// * workspace: `workspace_sbs.csv`, `workspace_coax.csv`, `workspace_area.csv`
/// * gaitplot: `gaitplot.csv`
/// * sweep: `sweep.csv` from [`SweepSpec::default`]
pub fn figure_data(
    cfg: &RobotConfig,
    gait: &GaitParams<f64>,
    which: Figure,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = |name: &str| out_dir.join(name);
    match which {
        Figure::Workspace => {
            let sbs = cfg.geom;
            let coax = sbs.with_spacing(0.0)?;
            let p_sbs = path("workspace_sbs.csv");
            let p_coax = path("workspace_coax.csv");
            let p_area = path("workspace_area.csv");
            write_workspace_csv(&workspace_sample(&sbs, WORKSPACE_GRID)?, create(&p_sbs)?)?;
            write_workspace_csv(&workspace_sample(&coax, WORKSPACE_GRID)?, create(&p_coax)?)?;
            let c = workspace_area_compare(&sbs, &coax, WORKSPACE_GRID)?;
            let mut out = csv::Writer::from_writer(create(&p_area)?);
            out.write_record(["motor_spacing", "area_sbs", "area_coax", "ratio", "hull_area_sbs", "hull_area_coax"])?;
            out.write_record(
                [sbs.motor_spacing, c.area_sbs, c.area_coax, c.ratio, c.hull_area_sbs, c.hull_area_coax].map(fmt_g9),
            )?;
            out.flush().map_err(csv::Error::from)?;
            Ok(vec![p_sbs, p_coax, p_area])
        }
        Figure::GaitPlot => {
            let p = path("gaitplot.csv");
            write_gait_plot_csv(&gait_plot(&cfg.geom, gait, GAIT_PLOT_SAMPLES)?, create(&p)?)?;
            Ok(vec![p])
        }
        Figure::Sweep => {
            let p = path("sweep.csv");
            let spec = SweepSpec {
                base: *gait,
                ..SweepSpec::default()
            };
            write_sweep_csv(&sweep(cfg, &spec)?, create(&p)?)?;
            Ok(vec![p])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FkVector {
    pub theta1: f64,
    pub theta2: f64,
    pub x: f64,
    pub y: f64,
}

/// Forward-kinematics fixture for clients that draw legs from joint angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkVectors {
    pub v: u32,
    pub geometry: GeometrySection,
    pub vectors: Vec<FkVector>,
}

/// FK on an 8 × 8 joint grid; poses that do not close are left out.
pub fn fk_test_vectors(geom: &LegGeometry<f64>) -> FkVectors {
    let n = 8;
    let mut vectors = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let at = |lim: &crate::kinematics::JointLimits<f64>, k: usize| {
                lim.min + lim.span() * (k as f64 + 0.5) / n as f64
            };
            let q = JointPair::new(at(&geom.limits[0], i), at(&geom.limits[1], j));
            if let Ok(foot) = forward_kinematics(geom, q) {
                vectors.push(FkVector {
                    theta1: q.theta1,
                    theta2: q.theta2,
                    x: foot.x,
                    y: foot.y,
                });
            }
        }
    }
    FkVectors {
        v: 1,
        geometry: GeometrySection::from(geom),
        vectors,
    }
}
