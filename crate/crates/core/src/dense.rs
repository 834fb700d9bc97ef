//! Fixed-rate pose generation along sparse waypoint polylines.
//!
//! A look-ahead tracker follows the polyline in the horizontal plane while a
//! random-walk speed profile, a yaw-rate limit and the chosen motion model
//! shape the motion. Height above ground is drawn once per trajectory.

use std::f64::consts::PI;

use nalgebra::{Point3, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geomio::{Pose, PoseSeq};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DenseError {
    #[error("invalid motion limits: {0}")]
    InvalidLimits(String),
    #[error("sparse trajectory is degenerate: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    Omnidirectional,
    DifferentialDrive,
}

impl std::str::FromStr for MotionModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "omni" | "omnidirectional" => Ok(Self::Omnidirectional),
            "diff" | "differential_drive" | "diff_drive" => Ok(Self::DifferentialDrive),
            _ => Err(format!("unknown motion model {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MotionLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub yaw_rate_max: f64,
    pub lookahead: f64,
    pub height_range: [f64; 2],
    pub noise_sigma: f64,
    pub dt: f64,
    /// Differential drive translates only when the bearing error is at most this.
    pub align_threshold: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            v_min: 0.3,
            v_max: 2.0,
            a_max: 1.0,
            yaw_rate_max: 1.5,
            lookahead: 2.0,
            height_range: [0.5, 1.5],
            noise_sigma: 0.02,
            dt: 0.1,
            align_threshold: 0.3,
        }
    }
}

impl MotionLimits {
    pub fn validate(&self) -> Result<(), DenseError> {
        let bad = |m: &str| Err(DenseError::InvalidLimits(m.into()));
        if !(0.0 <= self.v_min && self.v_min <= self.v_max && self.v_max > 0.0) {
            return bad("need 0 <= v_min <= v_max and v_max > 0");
        }
        if !(self.a_max >= 0.0) || !(self.yaw_rate_max > 0.0) || !(self.lookahead > 0.0) {
            return bad("a_max must be >= 0, yaw_rate_max and lookahead > 0");
        }
        let [lo, hi] = self.height_range;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return bad("height_range must satisfy 0 <= lo <= hi");
        }
        if !(self.noise_sigma >= 0.0) || !(self.dt > 0.0) || !(self.align_threshold > 0.0) {
            return bad("noise_sigma >= 0, dt > 0 and align_threshold > 0 required");
        }
        Ok(())
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Polyline parameterised by horizontal arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Point3<f64>>,
    cum: Vec<f64>,
}

fn xy(p: &Point3<f64>) -> Vector2<f64> {
    Vector2::new(p.x, p.y)
}

impl Polyline {
    /// Build from waypoints; consecutive points sharing `(x, y)` are merged.
    pub fn new(points: &[Point3<f64>]) -> Result<Self, DenseError> {
        let mut pts: Vec<Point3<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(DenseError::Degenerate("non-finite waypoint".into()));
            }
            if pts.last().is_none_or(|q| xy(q) != xy(p)) {
                pts.push(*p);
            }
        }
        if pts.len() < 2 {
            return Err(DenseError::Degenerate("fewer than two distinct waypoints".into()));
        }
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + (xy(&w[1]) - xy(&w[0])).norm());
        }
        Ok(Self { points: pts, cum })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn last(&self) -> Point3<f64> {
        *self.points.last().unwrap()
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Point3<f64> {
        if s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return self.last();
        }
        let k = self.cum.partition_point(|&c| c <= s) - 1;
        let t = (s - self.cum[k]) / (self.cum[k + 1] - self.cum[k]);
        self.points[k] + (self.points[k + 1] - self.points[k]) * t
    }

    /// Arc length of the horizontally closest point to `p` with arc length in
    /// `[s_lo, s_hi]`. Ties resolve to the smaller arc length.
    pub fn project_within(&self, p: &Point3<f64>, s_lo: f64, s_hi: f64) -> f64 {
        let q = xy(p);
        let mut best = (f64::INFINITY, s_lo);
        for k in 0..self.points.len() - 1 {
            let (c0, c1) = (self.cum[k], self.cum[k + 1]);
            if c1 < s_lo || c0 > s_hi {
                continue;
            }
            let (a, b) = (xy(&self.points[k]), xy(&self.points[k + 1]));
            let seg = b - a;
            let t = ((q - a).dot(&seg) / seg.norm_squared()).clamp(0.0, 1.0);
            let s = (c0 + t * (c1 - c0)).clamp(s_lo, s_hi);
            let d = (xy(&self.point_at(s)) - q).norm_squared();
            if d < best.0 {
                best = (d, s);
            }
        }
        best.1
    }

    pub fn project(&self, p: &Point3<f64>) -> f64 {
        self.project_within(p, 0.0, self.length())
    }
}

/// Point `lookahead` beyond the closest-point projection of `position`, or
/// the final waypoint when that runs past the end.
pub fn lookahead_target(poly: &Polyline, position: &Point3<f64>, lookahead: f64) -> Point3<f64> {
    poly.point_at(poly.project(position) + lookahead)
}

/// `clamp(prev + a * dt, v_min, v_max)` with `a ~ U(-a_max, a_max)`.
pub fn random_walk_speed<R: Rng + ?Sized>(prev: f64, limits: &MotionLimits, rng: &mut R) -> f64 {
    let a = if limits.a_max > 0.0 { rng.random_range(-limits.a_max..=limits.a_max) } else { 0.0 };
    (prev + a * limits.dt).clamp(limits.v_min, limits.v_max)
}

/// Generator for trajectory `traj_id` under base seed `seed`.
pub fn trajectory_rng(seed: u64, traj_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj_id);
    rng
}

/// Pose sequence with per-step commanded speed and yaw.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePoseSeq {
    pub poses: PoseSeq,
    pub speed: Vec<f64>,
    pub yaw: Vec<f64>,
    /// Tracking point steered towards when producing each pose.
    pub targets: Vec<Point3<f64>>,
    /// Height above ground shared by the whole trajectory.
    pub height: f64,
}

/// Optional overrides for [`densify`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DensifyOptions {
    pub initial_speed: Option<f64>,
    /// Hard cap on generated poses; derived from path length when `None`.
    pub max_steps: Option<usize>,
}

/// Noise-free simulation. See [`densify`].
pub fn densify_clean<R: Rng + ?Sized>(
    waypoints: &[Point3<f64>],
    model: MotionModel,
    limits: &MotionLimits,
    opts: &DensifyOptions,
    rng: &mut R,
) -> Result<DensePoseSeq, DenseError> {
    limits.validate()?;
    let poly = Polyline::new(waypoints)?;
    let [h_lo, h_hi] = limits.height_range;
    let height = if h_hi > h_lo { rng.random_range(h_lo..=h_hi) } else { h_lo };
    let mut v = match opts.initial_speed {
        Some(v0) => v0.clamp(limits.v_min, limits.v_max),
        None if limits.v_max > limits.v_min => rng.random_range(limits.v_min..=limits.v_max),
        None => limits.v_min,
    };
    let dt = limits.dt;
    let end = poly.last();
    let max_steps = opts.max_steps.unwrap_or_else(|| {
        let slow = limits.v_min.max(0.1 * limits.v_max);
        (20.0 * (poly.length() + limits.lookahead) / (slow * dt)) as usize + 10_000
    });

    let mut s = 0.0;
    let start = poly.point_at(0.0);
    let mut pos = Point3::new(start.x, start.y, start.z + height);
    let first_target = poly.point_at(limits.lookahead);
    let mut yaw = (first_target.y - pos.y).atan2(first_target.x - pos.x);

    let mut entries = Vec::new();
    let mut speeds = Vec::new();
    let mut yaws = Vec::new();
    let mut targets = vec![first_target];
    let push = |entries: &mut Vec<Pose>, k: usize, p: Point3<f64>, yaw: f64| {
        entries.push(Pose::new(k as f64 * dt, p.coords, UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)));
    };
    push(&mut entries, 0, pos, yaw);
    speeds.push(v);
    yaws.push(yaw);

    let mut k = 0;
    while (xy(&pos) - xy(&end)).norm() > 0.5 * limits.lookahead {
        if k + 1 >= max_steps {
            log::warn!("step cap {max_steps} reached before the final waypoint");
            break;
        }
        let target = poly.point_at(s + limits.lookahead);
        v = random_walk_speed(v, limits, rng);
        let to_target = xy(&target) - xy(&pos);
        let bearing = to_target.y.atan2(to_target.x);
        let max_turn = limits.yaw_rate_max * dt;
        let new_yaw = wrap_angle(yaw + wrap_angle(bearing - yaw).clamp(-max_turn, max_turn));
        let mut mv = match model {
            MotionModel::Omnidirectional => {
                let d = to_target.norm();
                if d > 0.0 {
                    to_target * ((v * dt).min(d) / d)
                } else {
                    Vector2::zeros()
                }
            }
            MotionModel::DifferentialDrive => {
                if wrap_angle(bearing - new_yaw).abs() <= limits.align_threshold {
                    Vector2::new(new_yaw.cos(), new_yaw.sin()) * (v * dt)
                } else {
                    Vector2::zeros()
                }
            }
        };
        let window = limits.lookahead + 2.0 * limits.v_max * dt;
        let advance = |mv: &Vector2<f64>| {
            let p = Point3::new(pos.x + mv.x, pos.y + mv.y, 0.0);
            let s_new = poly.project_within(&p, s, s + window);
            (Point3::new(p.x, p.y, poly.point_at(s_new).z + height), s_new)
        };
        let (mut next, mut s_next) = advance(&mv);
        let budget = v * dt;
        for _ in 0..5 {
            let n = (next - pos).norm();
            if n <= budget {
                break;
            }
            mv *= budget / n;
            (next, s_next) = advance(&mv);
        }
        let n = (next - pos).norm();
        if n > budget {
            let dz_max = (budget * budget - mv.norm_squared()).max(0.0).sqrt();
            next.z = pos.z + (next.z - pos.z).clamp(-dz_max, dz_max);
        }
        pos = next;
        s = s_next;
        yaw = new_yaw;
        k += 1;
        push(&mut entries, k, pos, yaw);
        speeds.push(v);
        yaws.push(yaw);
        targets.push(target);
    }
    let poses = PoseSeq::new(entries).expect("timestamps are k * dt");
    Ok(DensePoseSeq { poses, speed: speeds, yaw: yaws, targets, height })
}

/// Dense poses along `waypoints`, followed by Gaussian position noise.
pub fn densify<R: Rng + ?Sized>(
    waypoints: &[Point3<f64>],
    model: MotionModel,
    limits: &MotionLimits,
    opts: &DensifyOptions,
    rng: &mut R,
) -> Result<DensePoseSeq, DenseError> {
    let mut d = densify_clean(waypoints, model, limits, opts, rng)?;
    d.poses = apply_pose_noise(&d.poses, limits.noise_sigma, rng);
    Ok(d)
}

/// Add i.i.d. `N(0, sigma^2)` noise to every translation component.
pub fn apply_pose_noise<R: Rng + ?Sized>(seq: &PoseSeq, sigma: f64, rng: &mut R) -> PoseSeq {
    if sigma <= 0.0 {
        return seq.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let entries = seq
        .entries()
        .iter()
        .map(|p| {
            let n = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
            Pose::new(p.t, p.translation + n, p.rotation)
        })
        .collect();
    PoseSeq::new(entries).expect("timestamps unchanged")
}

/// Sidecar metadata describing how a dense trajectory was generated.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DenseMetadata {
    pub traj_id: usize,
    pub model: MotionModel,
    pub limits: MotionLimits,
    pub seed: u64,
    pub height: f64,
    pub poses: usize,
}
