//! Timestamped 6-DoF poses and the `t tx ty tz qx qy qz qw` text format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

use super::GeomIoError;

/// Quaternions further than this from unit norm are rejected on load.
pub const QUAT_REJECT_TOL: f64 = 1e-3;
/// Quaternions further than this (but within [`QUAT_REJECT_TOL`]) are
/// normalised with a warning.
pub const QUAT_WARN_TOL: f64 = 1e-6;

/// Body-to-world pose at time `t` (seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub t: f64,
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(t: f64, translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { t, translation, rotation }
    }

    pub fn identity(t: f64) -> Self {
        Self::new(t, Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_isometry(t: f64, iso: &Isometry3<f64>) -> Self {
        Self::new(t, iso.translation.vector, iso.rotation)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Quaternion components in file order `(qx, qy, qz, qw)`.
    pub fn quat_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }
}

/// Build a unit quaternion from `(qx, qy, qz, qw)`.
pub fn quat_from_xyzw(x: f64, y: f64, z: f64, w: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
}

/// Pose sequence with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseSeq {
    entries: Vec<Pose>,
}

impl PoseSeq {
    pub fn new(entries: Vec<Pose>) -> Result<Self, GeomIoError> {
        for (k, w) in entries.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(GeomIoError::NonIncreasingTime { index: k + 1, prev: w[0].t, t: w[1].t });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Pose] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Pose> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|p| p.t)
    }
}

pub fn parse_pose_seq(text: &str) -> Result<PoseSeq, GeomIoError> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(GeomIoError::parse(lineno, format!("expected 8 fields, found {}", fields.len())));
        }
        let mut v = [0.0f64; 8];
        for (k, f) in fields.iter().enumerate() {
            v[k] = f.parse().map_err(|e| GeomIoError::parse(lineno, format!("bad number {f:?}: {e}")))?;
            if !v[k].is_finite() {
                return Err(GeomIoError::parse(lineno, format!("non-finite value {f:?}")));
            }
        }
        let raw_q = Quaternion::new(v[7], v[4], v[5], v[6]);
        let dev = (raw_q.norm() - 1.0).abs();
        if dev > QUAT_REJECT_TOL {
            return Err(GeomIoError::parse(lineno, format!("quaternion norm {} is not unit", raw_q.norm())));
        }
        if dev > QUAT_WARN_TOL {
            log::warn!("line {lineno}: normalising quaternion with norm {}", raw_q.norm());
        }
        entries.push(Pose::new(v[0], Vector3::new(v[1], v[2], v[3]), UnitQuaternion::from_quaternion(raw_q)));
    }
    PoseSeq::new(entries)
}

pub fn format_pose_seq(seq: &PoseSeq) -> String {
    let mut out = String::from("# t tx ty tz qx qy qz qw\n");
    for p in &seq.entries {
        let [qx, qy, qz, qw] = p.quat_xyzw();
        let t = p.translation;
        let _ = writeln!(out, "{} {} {} {} {} {} {} {}", p.t, t.x, t.y, t.z, qx, qy, qz, qw);
    }
    out
}

pub fn load_pose_seq(path: &Path) -> Result<PoseSeq, GeomIoError> {
    parse_pose_seq(&fs::read_to_string(path)?)
}

pub fn save_pose_seq(seq: &PoseSeq, path: &Path) -> Result<(), GeomIoError> {
    fs::write(path, format_pose_seq(seq))?;
    Ok(())
}
