//! Planar five-bar leg kinematics.
//!
//! Leg-plane frame: motor 1 sits at the origin, motor 2 at `(d, 0)`, `+x` points
//! forward and `+y` points down toward the ground, so leg extension is positive.
//! Joint angles are measured counterclockwise from `+x` in that frame, which
//! means `θ = π/2` points a proximal link straight down.
//!
//! Each motor drives a proximal link of length `l1` to a knee; two distal links
//! of length `l2` meet at the foot. Forward kinematics intersects the circles of
//! radius `l2` around both knees and keeps the branch selected by
//! [`ElbowConfig`].

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Real};

/// Tolerance on circle intersections, m.
pub const REACH_TOL: f64 = 1e-9;
/// `|det J|` below this is flagged singular, m²/rad².
pub const SINGULAR_DET: f64 = 1e-9;
/// Slack on joint-limit checks so that round-tripped angles sitting on a limit pass.
pub const LIMIT_TOL: f64 = 1e-12;
/// Knee separations below this are treated as coincident knees, m.
const COINCIDENT_TOL: f64 = 1e-12;
/// `|det A|` of the closure constraint below this means the distal links are collinear, m².
const CLOSURE_SINGULAR_TOL: f64 = 1e-14;
/// Maximum foot error for a knee-branch candidate to count as consistent with FK, m.
const BRANCH_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("invalid leg geometry: {0}")]
    InvalidGeometry(String),
    #[error("motor {motor} angle {angle} rad outside joint limits [{min}, {max}]")]
    JointLimit {
        motor: usize,
        angle: f64,
        min: f64,
        max: f64,
    },
    #[error("linkage cannot close: knee separation {separation} m, distal reach {max} m")]
    UnreachableClosure { separation: f64, max: f64 },
    #[error("foot point ({x}, {y}) is outside the reachable workspace")]
    Unreachable { x: f64, y: f64 },
    #[error("closure singularity: distal links are collinear")]
    ClosureSingularity,
    #[error("geometries differ in link lengths")]
    GeometryMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Which of the two closure solutions the mechanism is assembled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElbowConfig {
    /// Foot at the intersection farther from the motor line (larger `y`).
    #[default]
    KneesOutward,
    /// Foot at the intersection closer to the motor line (smaller `y`).
    KneesInward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits<T> {
    pub min: T,
    pub max: T,
}

impl<T: Real> JointLimits<T> {
    pub fn contains(&self, angle: T) -> bool {
        let slack = lit::<T>(LIMIT_TOL);
        angle >= self.min - slack && angle <= self.max + slack
    }

    pub fn span(&self) -> T {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointPair<T> {
    pub theta1: T,
    pub theta2: T,
}

impl<T: Real> JointPair<T> {
    pub fn new(theta1: T, theta2: T) -> Self {
        Self { theta1, theta2 }
    }

    /// The pose reflected through the leg midline: `(π − θ2, π − θ1)`.
    pub fn mirrored(self) -> Self {
        Self::new(T::PI() - self.theta2, T::PI() - self.theta1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootPoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> FootPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Dimensions and limits of one five-bar leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry<T> {
    /// Distance between the two motor axes along `+x`, m. Zero is a coaxial leg.
    pub motor_spacing: T,
    pub proximal_len: T,
    pub distal_len: T,
    /// Limits for motor 1 and motor 2, rad.
    pub limits: [JointLimits<T>; 2],
    pub elbow: ElbowConfig,
}

impl<T: Real> Default for LegGeometry<T> {
    /// 20 mm motor spacing, 40 mm / 60 mm links, limits [0.17, 2.97] rad.
    fn default() -> Self {
        let limits = JointLimits {
            min: lit(0.17),
            max: lit(2.97),
        };
        Self {
            motor_spacing: lit(0.02),
            proximal_len: lit(0.04),
            distal_len: lit(0.06),
            limits: [limits, limits],
            elbow: ElbowConfig::KneesOutward,
        }
    }
}

impl<T: Real> LegGeometry<T> {
    /// Symmetric geometry with identical limits on both motors.
    pub fn new(
        motor_spacing: T,
        proximal_len: T,
        distal_len: T,
        limits: JointLimits<T>,
        elbow: ElbowConfig,
    ) -> Result<Self, KinematicsError> {
        let geom = Self {
            motor_spacing,
            proximal_len,
            distal_len,
            limits: [limits, limits],
            elbow,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Same links and limits, different motor spacing.
    pub fn with_spacing(&self, motor_spacing: T) -> Result<Self, KinematicsError> {
        let geom = Self {
            motor_spacing,
            ..*self
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |msg: &str| Err(KinematicsError::InvalidGeometry(msg.to_string()));
        let finite = [self.motor_spacing, self.proximal_len, self.distal_len]
            .iter()
            .chain(self.limits.iter().flat_map(|l| [&l.min, &l.max]))
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        if self.motor_spacing < T::zero() {
            return bad("motor spacing must be >= 0");
        }
        if self.proximal_len <= T::zero() || self.distal_len <= T::zero() {
            return bad("link lengths must be > 0");
        }
        if self.limits.iter().any(|l| l.min >= l.max) {
            return bad("joint_min must be < joint_max");
        }
        if !self.has_reachable_pose() {
            return bad("no joint pose inside the limits closes the linkage");
        }
        Ok(())
    }

    fn has_reachable_pose(&self) -> bool {
        const N: usize = 9;
        let steps = lit::<T>((N - 1) as f64);
        (0..N).any(|i| {
            (0..N).any(|j| {
                let t1 = self.limits[0].min + self.limits[0].span() * lit(i as f64) / steps;
                let t2 = self.limits[1].min + self.limits[1].span() * lit(j as f64) / steps;
                close_linkage(self, JointPair::new(t1, t2)).is_ok()
            })
        })
    }

    /// Motor axis positions in the leg frame.
    pub fn motors(&self) -> [FootPoint<T>; 2] {
        [
            FootPoint::new(T::zero(), T::zero()),
            FootPoint::new(self.motor_spacing, T::zero()),
        ]
    }

    /// `x` of the linkage midline, halfway between the motors.
    pub fn midline_x(&self) -> T {
        self.motor_spacing / lit(2.0)
    }

    pub fn max_reach(&self) -> T {
        self.proximal_len + self.distal_len
    }

    pub fn check_limits(&self, q: JointPair<T>) -> Result<(), KinematicsError> {
        for (motor, (angle, lim)) in [q.theta1, q.theta2].iter().zip(&self.limits).enumerate() {
            if !angle.is_finite() || !lim.contains(*angle) {
                return Err(KinematicsError::JointLimit {
                    motor: motor + 1,
                    angle: angle.to_f64_lossy(),
                    min: lim.min.to_f64_lossy(),
                    max: lim.max.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }

    /// True if both geometries share link lengths.
    pub fn same_links(&self, other: &Self) -> bool {
        self.proximal_len == other.proximal_len && self.distal_len == other.distal_len
    }
}

/// Solved linkage: both knees and the foot.
#[derive(Debug, Clone, Copy)]
struct Closure<T> {
    knees: [FootPoint<T>; 2],
    foot: FootPoint<T>,
    /// Knees coincide (coaxial leg with equal angles); the foot is the collinear limit.
    coincident: bool,
}

fn close_linkage<T: Real>(
    geom: &LegGeometry<T>,
    q: JointPair<T>,
) -> Result<Closure<T>, KinematicsError> {
    let l1 = geom.proximal_len;
    let l2 = geom.distal_len;
    let (s1, c1) = q.theta1.sin_cos();
    let (s2, c2) = q.theta2.sin_cos();
    let k1 = FootPoint::new(l1 * c1, l1 * s1);
    let k2 = FootPoint::new(geom.motor_spacing + l1 * c2, l1 * s2);
    let dx = k2.x - k1.x;
    let dy = k2.y - k1.y;
    let sep = dx.hypot(dy);
    let pick = |a: FootPoint<T>, b: FootPoint<T>| {
        let a_lower = a.y >= b.y;
        match (geom.elbow, a_lower) {
            (ElbowConfig::KneesOutward, true) | (ElbowConfig::KneesInward, false) => a,
            _ => b,
        }
    };

    if sep <= lit(COINCIDENT_TOL) {
        if geom.motor_spacing.abs() > lit(COINCIDENT_TOL) {
            return Err(KinematicsError::UnreachableClosure {
                separation: sep.to_f64_lossy(),
                max: (l2 + l2).to_f64_lossy(),
            });
        }
        // Coaxial leg, both links on one ray: the distal links lie along it too.
        let a = FootPoint::new(k1.x + l2 * c1, k1.y + l2 * s1);
        let b = FootPoint::new(k1.x - l2 * c1, k1.y - l2 * s1);
        return Ok(Closure {
            knees: [k1, k2],
            foot: pick(a, b),
            coincident: true,
        });
    }
    if sep > l2 + l2 + lit(REACH_TOL) {
        return Err(KinematicsError::UnreachableClosure {
            separation: sep.to_f64_lossy(),
            max: (l2 + l2).to_f64_lossy(),
        });
    }
    let half = sep / lit(2.0);
    let h = (l2 * l2 - half * half).max(T::zero()).sqrt();
    let mx = (k1.x + k2.x) / lit(2.0);
    let my = (k1.y + k2.y) / lit(2.0);
    let nx = -dy / sep;
    let ny = dx / sep;
    let a = FootPoint::new(mx + h * nx, my + h * ny);
    let b = FootPoint::new(mx - h * nx, my - h * ny);
    Ok(Closure {
        knees: [k1, k2],
        foot: pick(a, b),
        coincident: false,
    })
}

/// Foot position for a joint pair.
pub fn forward_kinematics<T: Real>(
    geom: &LegGeometry<T>,
    q: JointPair<T>,
) -> Result<FootPoint<T>, KinematicsError> {
    geom.check_limits(q)?;
    Ok(close_linkage(geom, q)?.foot)
}

/// Knee positions for a joint pair (no limit check).
pub fn knee_points<T: Real>(
    geom: &LegGeometry<T>,
    q: JointPair<T>,
) -> Result<[FootPoint<T>; 2], KinematicsError> {
    Ok(close_linkage(geom, q)?.knees)
}

/// Both knee candidates for one motor: intersections of `(motor, l1)` and `(foot, l2)`.
/// The first entry lies on the left of the ray motor→foot.
fn knee_candidates<T: Real>(
    geom: &LegGeometry<T>,
    motor: FootPoint<T>,
    p: FootPoint<T>,
) -> Result<[FootPoint<T>; 2], KinematicsError> {
    let l1 = geom.proximal_len;
    let l2 = geom.distal_len;
    let unreachable = || KinematicsError::Unreachable {
        x: p.x.to_f64_lossy(),
        y: p.y.to_f64_lossy(),
    };
    let vx = p.x - motor.x;
    let vy = p.y - motor.y;
    let r = vx.hypot(vy);
    let tol = lit::<T>(REACH_TOL);
    if r <= tol || r > l1 + l2 + tol || r < (l1 - l2).abs() - tol {
        return Err(unreachable());
    }
    let a = (r * r + l1 * l1 - l2 * l2) / (r + r);
    let h2 = l1 * l1 - a * a;
    if h2 < -(l1 + l1) * tol {
        return Err(unreachable());
    }
    let h = h2.max(T::zero()).sqrt();
    let ex = vx / r;
    let ey = vy / r;
    let cx = motor.x + a * ex;
    let cy = motor.y + a * ey;
    Ok([
        FootPoint::new(cx - h * ey, cy + h * ex),
        FootPoint::new(cx + h * ey, cy - h * ex),
    ])
}

fn angle_to<T: Real>(from: FootPoint<T>, to: FootPoint<T>) -> T {
    let a = (to.y - from.y).atan2(to.x - from.x);
    if a < T::zero() {
        a + T::TAU()
    } else {
        a
    }
}

/// Joint pair placing the foot at `p` on the configured elbow branch.
///
/// Every knee combination is checked against forward kinematics so the result
/// always reproduces `p` under the same branch selection FK uses.
pub fn inverse_kinematics<T: Real>(
    geom: &LegGeometry<T>,
    p: FootPoint<T>,
) -> Result<JointPair<T>, KinematicsError> {
    if !p.is_finite() {
        return Err(KinematicsError::Unreachable {
            x: p.x.to_f64_lossy(),
            y: p.y.to_f64_lossy(),
        });
    }
    let [m1, m2] = geom.motors();
    let [k1_left, k1_right] = knee_candidates(geom, m1, p)?;
    let [k2_left, k2_right] = knee_candidates(geom, m2, p)?;
    // Knees spread apart (motor 1's knee behind, motor 2's in front) first.
    let spread = [
        (k1_left, k2_right),
        (k1_left, k2_left),
        (k1_right, k2_right),
        (k1_right, k2_left),
    ];
    let order: [usize; 4] = match geom.elbow {
        ElbowConfig::KneesOutward => [0, 1, 2, 3],
        ElbowConfig::KneesInward => [3, 1, 2, 0],
    };
    let mut limit_err = None;
    for idx in order {
        let (k1, k2) = spread[idx];
        let q = JointPair::new(angle_to(m1, k1), angle_to(m2, k2));
        let Ok(closure) = close_linkage(geom, q) else {
            continue;
        };
        if closure.foot.distance(p) > lit(BRANCH_TOL) {
            continue;
        }
        match geom.check_limits(q) {
            Ok(()) => return Ok(q),
            Err(e) => {
                limit_err.get_or_insert(e);
            }
        }
    }
    Err(limit_err.unwrap_or(KinematicsError::Unreachable {
        x: p.x.to_f64_lossy(),
        y: p.y.to_f64_lossy(),
    }))
}

/// Foot Jacobian `∂(x, y)/∂(θ1, θ2)`, computed analytically by differentiating the
/// closure constraints `|P − K_i|² = l2²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian<T> {
    /// Row-major: `m[0]` is `∂x/∂θ`, `m[1]` is `∂y/∂θ`.
    pub m: [[T; 2]; 2],
    pub det: T,
    /// `|det| <` [`SINGULAR_DET`].
    pub singular: bool,
}

impl<T: Real> Jacobian<T> {
    /// Foot velocity for joint rates.
    pub fn apply(&self, rates: [T; 2]) -> [T; 2] {
        [
            self.m[0][0] * rates[0] + self.m[0][1] * rates[1],
            self.m[1][0] * rates[0] + self.m[1][1] * rates[1],
        ]
    }
}

pub fn jacobian<T: Real>(
    geom: &LegGeometry<T>,
    q: JointPair<T>,
) -> Result<Jacobian<T>, KinematicsError> {
    geom.check_limits(q)?;
    let closure = close_linkage(geom, q)?;
    let l1 = geom.proximal_len;
    let m = if closure.coincident {
        // Collinear coaxial limit: the foot rides the shared ray at radius l1 ± l2,
        // each motor contributes half of the rotation.
        let radius = closure.foot.x.hypot(closure.foot.y)
            * if closure.foot.y * q.theta1.sin() + closure.foot.x * q.theta1.cos() >= T::zero() {
                T::one()
            } else {
                -T::one()
            };
        let (s, c) = q.theta1.sin_cos();
        let half = radius / lit(2.0);
        [[-half * s, -half * s], [half * c, half * c]]
    } else {
        let p = closure.foot;
        let [k1, k2] = closure.knees;
        let (e1x, e1y) = (p.x - k1.x, p.y - k1.y);
        let (e2x, e2y) = (p.x - k2.x, p.y - k2.y);
        let det_a = e1x * e2y - e1y * e2x;
        if det_a.abs() < lit(CLOSURE_SINGULAR_TOL) {
            return Err(KinematicsError::ClosureSingularity);
        }
        let (s1, c1) = q.theta1.sin_cos();
        let (s2, c2) = q.theta2.sin_cos();
        let b1 = l1 * (-e1x * s1 + e1y * c1);
        let b2 = l1 * (-e2x * s2 + e2y * c2);
        [
            [e2y * b1 / det_a, -e1y * b2 / det_a],
            [-e2x * b1 / det_a, e1x * b2 / det_a],
        ]
    };
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    Ok(Jacobian {
        m,
        det,
        singular: det.abs() < lit(SINGULAR_DET),
    })
}

/// `|det J|`, the planar two-DOF manipulability measure.
pub fn manipulability<T: Real>(
    geom: &LegGeometry<T>,
    q: JointPair<T>,
) -> Result<T, KinematicsError> {
    Ok(jacobian(geom, q)?.det.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkspacePoint<T> {
    pub q: JointPair<T>,
    pub foot: FootPoint<T>,
    pub manipulability: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkspaceSample<T> {
    /// Row-major over the joint grid (`θ1` outer, `θ2` inner).
    pub points: Vec<WorkspacePoint<T>>,
    /// Grid poses whose linkage does not close.
    pub skipped: usize,
    /// Grid poses with crossed proximal links (`θ1 < θ2`), left out.
    pub crossed: usize,
}

impl<T: Real> WorkspaceSample<T> {
    pub fn feet(&self) -> impl Iterator<Item = FootPoint<T>> + '_ {
        self.points.iter().map(|p| p.foot)
    }
}

/// Forward kinematics on the uniform `n × n` grid spanning both joint ranges.
///
/// Only uncrossed poses count: motor 1's link must point at least as far back as
/// motor 2's. With coaxial motors the crossed half repeats the uncrossed feet.
pub fn workspace_sample<T: Real>(
    geom: &LegGeometry<T>,
    n_per_axis: usize,
) -> Result<WorkspaceSample<T>, KinematicsError> {
    if n_per_axis < 2 {
        return Err(KinematicsError::InvalidArgument(format!(
            "n_per_axis must be >= 2, got {n_per_axis}"
        )));
    }
    let steps = lit::<T>((n_per_axis - 1) as f64);
    let grid = |lim: &JointLimits<T>, i: usize| {
        if i + 1 == n_per_axis {
            lim.max
        } else {
            lim.min + lim.span() * lit::<T>(i as f64) / steps
        }
    };
    let mut points = Vec::with_capacity(n_per_axis * n_per_axis);
    let mut skipped = 0;
    let mut crossed = 0;
    for i in 0..n_per_axis {
        let t1 = grid(&geom.limits[0], i);
        for j in 0..n_per_axis {
            let q = JointPair::new(t1, grid(&geom.limits[1], j));
            if q.theta1 < q.theta2 {
                crossed += 1;
                continue;
            }
            let sample = forward_kinematics(geom, q)
                .and_then(|foot| Ok((foot, manipulability(geom, q)?)));
            match sample {
                Ok((foot, manipulability)) => points.push(WorkspacePoint {
                    q,
                    foot,
                    manipulability,
                }),
                Err(_) => skipped += 1,
            }
        }
    }
    Ok(WorkspaceSample {
        points,
        skipped,
        crossed,
    })
}

/// Area covered by occupied square cells of side `cell`.
pub fn occupancy_area<T: Real>(points: impl IntoIterator<Item = FootPoint<T>>, cell: T) -> T {
    let cells: HashSet<(i64, i64)> = points
        .into_iter()
        .filter_map(|p| {
            let ix = (p.x / cell).floor().to_i64()?;
            let iy = (p.y / cell).floor().to_i64()?;
            Some((ix, iy))
        })
        .collect();
    lit::<T>(cells.len() as f64) * cell * cell
}

/// Convex hull area (Andrew's monotone chain).
pub fn convex_hull_area<T: Real>(points: impl IntoIterator<Item = FootPoint<T>>) -> T {
    let mut pts: Vec<FootPoint<T>> = points.into_iter().filter(|p| p.is_finite()).collect();
    if pts.len() < 3 {
        return T::zero();
    }
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
    });
    let cross = |o: FootPoint<T>, a: FootPoint<T>, b: FootPoint<T>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<FootPoint<T>> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &FootPoint<T>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero()
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let n = hull.len();
    let twice = (0..n).fold(T::zero(), |acc, i| {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        acc + a.x * b.y - b.x * a.y
    });
    (twice / lit(2.0)).abs()
}

/// Occupancy grid cell used for workspace areas, m.
pub const WORKSPACE_CELL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkspaceComparison<T> {
    pub area_sbs: T,
    pub area_coax: T,
    /// `area_sbs / area_coax`.
    pub ratio: T,
    pub hull_area_sbs: T,
    pub hull_area_coax: T,
}

/// Occupancy-grid areas of a side-by-side leg and its coaxial counterpart.
pub fn workspace_area_compare<T: Real>(
    geom_sbs: &LegGeometry<T>,
    geom_coax: &LegGeometry<T>,
    n: usize,
) -> Result<WorkspaceComparison<T>, KinematicsError> {
    if !geom_sbs.same_links(geom_coax) {
        return Err(KinematicsError::GeometryMismatch);
    }
    let sbs = workspace_sample(geom_sbs, n)?;
    let coax = workspace_sample(geom_coax, n)?;
    let cell = lit::<T>(WORKSPACE_CELL);
    let area_sbs = occupancy_area(sbs.feet(), cell);
    let area_coax = occupancy_area(coax.feet(), cell);
    Ok(WorkspaceComparison {
        area_sbs,
        area_coax,
        ratio: area_sbs / area_coax,
        hull_area_sbs: convex_hull_area(sbs.feet()),
        hull_area_coax: convex_hull_area(coax.feet()),
    })
}
