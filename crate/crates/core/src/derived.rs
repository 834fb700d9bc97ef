//! Ground truth derived from depth and poses: stereo disparity, forward
//! optical flow and IMU readings.

use std::fmt::Write as _;

use nalgebra::{Isometry3, Vector3};
use rayon::prelude::*;

use crate::camview::PinholeCamera;
use crate::geomio::{GeomIoError, Image, PoseSeq};

/// Standard gravity in the z-up world frame.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);
/// Allowed deviation from the nominal step when checking uniform timestamps.
pub const DT_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DerivedError {
    #[error("stereo baseline must be positive, got {0}")]
    Baseline(f64),
    #[error("need at least 3 poses, got {0}")]
    TooFewPoses(usize),
    #[error("timestamps not uniform: step {index} is {dt}, expected {expected}")]
    NonUniform { index: usize, dt: f64, expected: f64 },
    #[error("depth image is {got:?}, camera expects {want:?}")]
    SizeMismatch { got: (usize, usize), want: (usize, usize) },
    #[error(transparent)]
    Image(#[from] GeomIoError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub cam: PinholeCamera,
    /// Horizontal baseline of the rectified pair, meters.
    pub baseline: f64,
}

impl StereoRig {
    pub fn new(cam: PinholeCamera, baseline: f64) -> Result<Self, DerivedError> {
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(DerivedError::Baseline(baseline));
        }
        Ok(Self { cam, baseline })
    }
}

/// `fx * b / z`; infinite depth maps to zero disparity.
pub fn disparity_value(z: f64, fx: f64, baseline: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        fx * baseline / z
    }
}

/// Inverse of [`disparity_value`]; zero disparity maps to infinite depth.
pub fn depth_value(d: f64, fx: f64, baseline: f64) -> f64 {
    if d == 0.0 {
        f64::INFINITY
    } else {
        fx * baseline / d
    }
}

pub fn disparity_from_depth(depth: &Image, rig: &StereoRig) -> Result<Image, DerivedError> {
    depth.validate_depth()?;
    let z = depth.as_f32().unwrap();
    let d = z.iter().map(|&z| disparity_value(z as f64, rig.cam.fx, rig.baseline) as f32).collect();
    Ok(Image::float(depth.width(), depth.height(), 1, d)?)
}

pub fn depth_from_disparity(disp: &Image, rig: &StereoRig) -> Result<Image, DerivedError> {
    let d = disp
        .as_f32()
        .filter(|_| disp.channels() == 1)
        .ok_or_else(|| GeomIoError::InvalidParameter("disparity must be one float channel".into()))?;
    let z = d.iter().map(|&d| depth_value(d as f64, rig.cam.fx, rig.baseline) as f32).collect();
    Ok(Image::depth(disp.width(), disp.height(), z)?)
}

/// Dense forward flow with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    /// Interleaved `(du, dv)` per pixel; zero where invalid.
    pub flow: Vec<f32>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn at(&self, u: usize, v: usize) -> Option<(f32, f32)> {
        let i = v * self.width + u;
        self.valid[i].then(|| (self.flow[2 * i], self.flow[2 * i + 1]))
    }

    /// Three float channels `(du, dv, valid)` for PFM storage.
    pub fn to_image(&self) -> Image {
        let mut data = Vec::with_capacity(3 * self.valid.len());
        for (i, &ok) in self.valid.iter().enumerate() {
            data.extend([self.flow[2 * i], self.flow[2 * i + 1], if ok { 1.0 } else { 0.0 }]);
        }
        Image::float(self.width, self.height, 3, data).expect("sizes agree")
    }

    /// Inverse of [`to_image`](Self::to_image); a two-channel image is taken as all valid.
    pub fn from_image(img: &Image) -> Result<Self, DerivedError> {
        let d = img
            .as_f32()
            .filter(|_| matches!(img.channels(), 2 | 3))
            .ok_or_else(|| GeomIoError::InvalidParameter("flow must have 2 or 3 float channels".into()))?;
        let c = img.channels();
        let n = img.width() * img.height();
        let mut flow = Vec::with_capacity(2 * n);
        let mut valid = Vec::with_capacity(n);
        for p in 0..n {
            flow.extend([d[c * p], d[c * p + 1]]);
            valid.push(c == 2 || d[c * p + 2] > 0.5);
        }
        Ok(Self { width: img.width(), height: img.height(), flow, valid })
    }
}

/// Camera-frame point seen at pixel `(u, v)` with z-depth `z`.
pub fn back_project(cam: &PinholeCamera, u: f64, v: f64, z: f64) -> Vector3<f64> {
    Vector3::new((u + 0.5 - cam.cx) / cam.fx * z, (v + 0.5 - cam.cy) / cam.fy * z, z)
}

/// Forward flow from frame 0 to frame 1. Poses are body-to-world and the
/// camera is mounted at the body origin with rotation `cam.rotation`.
/// Occlusions are not modelled.
pub fn flow_from_depth_poses(
    depth0: &Image,
    cam: &PinholeCamera,
    pose0: &Isometry3<f64>,
    pose1: &Isometry3<f64>,
) -> Result<FlowField, DerivedError> {
    let (w, h) = (cam.width, cam.height);
    if (depth0.width(), depth0.height()) != (w, h) {
        return Err(DerivedError::SizeMismatch { got: (depth0.width(), depth0.height()), want: (w, h) });
    }
    depth0.validate_depth()?;
    let z = depth0.as_f32().unwrap();
    let body_to_cam = cam.rotation;
    let cam0_to_cam1 = if pose0 == pose1 {
        Isometry3::identity()
    } else {
        Isometry3::from_parts(Default::default(), body_to_cam)
            * pose1.inverse()
            * pose0
            * Isometry3::from_parts(Default::default(), body_to_cam.inverse())
    };
    let rot = cam0_to_cam1.rotation.to_rotation_matrix();
    let trans = cam0_to_cam1.translation.vector;
    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut flow = Vec::with_capacity(2 * w);
            let mut valid = Vec::with_capacity(w);
            for u in 0..w {
                let zz = z[v * w + u] as f64;
                let mut out = None;
                if zz.is_finite() {
                    // Work on the normalized ray so that identity motion yields exactly zero flow.
                    let ray = Vector3::new((u as f64 + 0.5 - cam.cx) / cam.fx, (v as f64 + 0.5 - cam.cy) / cam.fy, 1.0);
                    let q = rot * ray + trans / zz;
                    if q.z > 0.0 {
                        let du = cam.fx * (q.x / q.z - ray.x);
                        let dv = cam.fy * (q.y / q.z - ray.y);
                        let (u1, v1) = (u as f64 + du, v as f64 + dv);
                        let inside = u1 + 0.5 >= 0.0 && u1 + 0.5 < w as f64 && v1 + 0.5 >= 0.0 && v1 + 0.5 < h as f64;
                        if inside {
                            out = Some((du as f32, dv as f32));
                        }
                    }
                }
                let (du, dv) = out.unwrap_or((0.0, 0.0));
                flow.extend([du, dv]);
                valid.push(out.is_some());
            }
            (flow, valid)
        })
        .collect();
    let mut flow = Vec::with_capacity(2 * w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (f, m) in rows {
        flow.extend(f);
        valid.extend(m);
    }
    Ok(FlowField { width: w, height: h, flow, valid })
}

/// Forward-backward consistency: a valid forward vector is kept when the
/// backward flow at its (nearest) target returns within `tol` pixels.
pub fn forward_backward_mask(fw: &FlowField, bw: &FlowField, tol: f32) -> Vec<bool> {
    let (w, h) = (fw.width, fw.height);
    (0..w * h)
        .map(|i| {
            let Some((du, dv)) = fw.at(i % w, i / w) else { return false };
            let (u1, v1) = (((i % w) as f32 + du).round(), ((i / w) as f32 + dv).round());
            if u1 < 0.0 || v1 < 0.0 || u1 >= w as f32 || v1 >= h as f32 {
                return false;
            }
            bw.at(u1 as usize, v1 as usize).is_some_and(|(bu, bv)| ((du + bu).powi(2) + (dv + bv).powi(2)).sqrt() <= tol)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Body-frame angular velocity, rad/s.
    pub angular_velocity: Vector3<f64>,
    /// Body-frame specific force, m/s^2.
    pub linear_acceleration: Vector3<f64>,
}

/// Ideal IMU readings from a uniformly sampled pose sequence.
///
/// Acceleration uses second differences of position (the first and last
/// samples reuse their neighbour's stencil); angular velocity is
/// `log(q_k^-1 q_{k+1}) / dt`, the last sample repeating the previous pair.
pub fn imu_from_poses(seq: &PoseSeq, gravity: &Vector3<f64>) -> Result<Vec<ImuSample>, DerivedError> {
    let e = seq.entries();
    let n = e.len();
    if n < 3 {
        return Err(DerivedError::TooFewPoses(n));
    }
    let dt = (e[n - 1].t - e[0].t) / (n - 1) as f64;
    for k in 0..n - 1 {
        let step = e[k + 1].t - e[k].t;
        if (step - dt).abs() > DT_TOL {
            return Err(DerivedError::NonUniform { index: k, dt: step, expected: dt });
        }
    }
    Ok((0..n)
        .map(|k| {
            let c = k.clamp(1, n - 2);
            let a_world = (e[c + 1].translation - 2.0 * e[c].translation + e[c - 1].translation) / (dt * dt);
            let g = k.min(n - 2);
            let dq = e[g].rotation.inverse() * e[g + 1].rotation;
            let omega = dq.scaled_axis() / dt;
            let acc = e[k].rotation.inverse() * (a_world - gravity);
            ImuSample { t: e[k].t, angular_velocity: omega, linear_acceleration: acc }
        })
        .collect())
}

pub fn format_imu_csv(samples: &[ImuSample]) -> String {
    let mut out = String::from("t,wx,wy,wz,ax,ay,az\n");
    for s in samples {
        let (w, a) = (s.angular_velocity, s.linear_acceleration);
        let _ = writeln!(out, "{},{},{},{},{},{},{}", s.t, w.x, w.y, w.z, a.x, a.y, a.z);
    }
    out
}
