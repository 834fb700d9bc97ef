//! Data checks: pose/image synchronization through flow-warped photometric
//! error, and collision detection from depth.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Isometry3;
use rayon::prelude::*;

use crate::camview::{load_camera, CamError, PinholeCamera};
use crate::derived::{flow_from_depth_poses, DerivedError};
use crate::geomio::{load_image, load_pose_seq, GeomIoError, Image};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("no pixel has a valid warp")]
    NoValidPixels,
    #[error("images differ in size: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("clearance must be positive, got {0}")]
    Clearance(f64),
    #[error("{0}")]
    Layout(String),
    #[error(transparent)]
    Derived(#[from] DerivedError),
    #[error(transparent)]
    Camera(#[from] CamError),
    #[error(transparent)]
    Io(#[from] GeomIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    /// Mean absolute luma difference (0..255) above which a pair is suspect.
    pub threshold: f64,
    /// A pair is only judged when at least this fraction of pixels warp validly.
    pub min_valid_fraction: f64,
    /// Depth below this distance counts as a collision, meters.
    pub clearance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { threshold: 10.0, min_valid_fraction: 0.3, clearance: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PhotometricReport {
    pub mean_photometric_error: f64,
    pub valid_pixel_fraction: f64,
    pub sync_suspect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CollisionReport {
    pub min_depth: f64,
    pub collision: bool,
}

fn bilinear(img: &[f32], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (ax, ay) = (x - x0 as f64, y - y0 as f64);
    let at = |u: usize, v: usize| img[v * w + u] as f64;
    let top = at(x0, y0) * (1.0 - ax) + at(x1, y0) * ax;
    let bot = at(x0, y1) * (1.0 - ax) + at(x1, y1) * ax;
    top * (1.0 - ay) + bot * ay
}

/// Warp `img1` into frame 0 with the flow implied by `depth0` and the poses,
/// and compare luma against `img0`.
pub fn photometric_sync_check(
    img0: &Image,
    img1: &Image,
    depth0: &Image,
    cam: &PinholeCamera,
    pose0: &Isometry3<f64>,
    pose1: &Isometry3<f64>,
    cfg: &VerifyConfig,
) -> Result<PhotometricReport, VerifyError> {
    let size = |i: &Image| (i.width(), i.height());
    if size(img0) != size(img1) {
        return Err(VerifyError::SizeMismatch(size(img0), size(img1)));
    }
    if size(img0) != (cam.width, cam.height) {
        return Err(VerifyError::SizeMismatch(size(img0), (cam.width, cam.height)));
    }
    let flow = flow_from_depth_poses(depth0, cam, pose0, pose1)?;
    let (g0, g1) = (img0.to_gray_f32(), img1.to_gray_f32());
    let (w, h) = (cam.width, cam.height);
    let (sum, count) = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut acc = (0.0, 0usize);
            for u in 0..w {
                if let Some((du, dv)) = flow.at(u, v) {
                    let warped = bilinear(&g1, w, h, u as f64 + du as f64, v as f64 + dv as f64);
                    acc.0 += (g0[v * w + u] as f64 - warped).abs();
                    acc.1 += 1;
                }
            }
            acc
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        return Err(VerifyError::NoValidPixels);
    }
    let err = sum / count as f64;
    let frac = count as f64 / (w * h) as f64;
    Ok(PhotometricReport {
        mean_photometric_error: err,
        valid_pixel_fraction: frac,
        sync_suspect: err > cfg.threshold && frac > cfg.min_valid_fraction,
    })
}

/// Collision when the nearest finite depth is below `clearance`. An image
/// without finite depth reports `min_depth = inf` and no collision.
pub fn depth_collision_check(depth: &Image, clearance: f64) -> Result<CollisionReport, VerifyError> {
    if !(clearance > 0.0) {
        return Err(VerifyError::Clearance(clearance));
    }
    depth.validate_depth()?;
    let min = depth.as_f32().unwrap().iter().map(|&z| z as f64).filter(|z| z.is_finite()).fold(f64::INFINITY, f64::min);
    if min.is_infinite() {
        log::warn!("depth image has no finite values");
    }
    Ok(CollisionReport { min_depth: min, collision: min < clearance })
}

/// One row of a batch run: the pair `(index, index + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PairCheck {
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    /// `None` when no pixel warped validly.
    pub photometric: Option<PhotometricReport>,
    /// Over both frames of the pair.
    pub collision: CollisionReport,
}

pub fn frame_paths(dir: &Path, k: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("image_{k:06}.ppm")), dir.join(format!("depth_{k:06}.pfm")))
}

/// Check a trajectory directory holding `poses.txt`, `camera.toml` and per
/// frame `image_NNNNNN.ppm` / `depth_NNNNNN.pfm`, numbered from 0 in pose order.
pub fn verify_directory(dir: &Path, cfg: &VerifyConfig) -> Result<Vec<PairCheck>, VerifyError> {
    let poses = load_pose_seq(&dir.join("poses.txt"))?;
    let cam = load_camera(&dir.join("camera.toml"))?;
    let n = poses.len();
    if n < 2 {
        return Err(VerifyError::Layout(format!("need at least 2 frames, poses.txt has {n}")));
    }
    for k in 0..n {
        let (img, depth) = frame_paths(dir, k);
        for p in [img, depth] {
            if !p.exists() {
                return Err(VerifyError::Layout(format!("missing {}", p.display())));
            }
        }
    }
    let e = poses.entries();
    (0..n - 1)
        .into_par_iter()
        .map(|k| {
            let (i0, d0) = frame_paths(dir, k);
            let (i1, d1) = frame_paths(dir, k + 1);
            let (img0, img1, depth0, depth1) = (load_image(&i0)?, load_image(&i1)?, load_image(&d0)?, load_image(&d1)?);
            let photometric =
                match photometric_sync_check(&img0, &img1, &depth0, &cam, &e[k].isometry(), &e[k + 1].isometry(), cfg) {
                    Ok(r) => Some(r),
                    Err(VerifyError::NoValidPixels) => None,
                    Err(other) => return Err(other),
                };
            let (c0, c1) = (depth_collision_check(&depth0, cfg.clearance)?, depth_collision_check(&depth1, cfg.clearance)?);
            let min_depth = c0.min_depth.min(c1.min_depth);
            Ok(PairCheck {
                index: k,
                t0: e[k].t,
                t1: e[k + 1].t,
                photometric,
                collision: CollisionReport { min_depth, collision: min_depth < cfg.clearance },
            })
        })
        .collect()
}

pub fn format_checks_csv(rows: &[PairCheck]) -> String {
    let mut out = String::from("index,t0,t1,mean_photometric_error,valid_pixel_fraction,sync_suspect,min_depth,collision\n");
    for r in rows {
        let (err, frac, suspect) = match r.photometric {
            Some(p) => (p.mean_photometric_error, p.valid_pixel_fraction, p.sync_suspect),
            None => (f64::NAN, 0.0, false),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.index, r.t0, r.t1, err, frac, suspect, r.collision.min_depth, r.collision.collision
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camview::Face;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(40.0, 40.0, 16.0, 12.0, 32, 24, Face::Front.rotation()).unwrap()
    }

    fn noise_image(seed: u32) -> Image {
        let data = (0..32 * 24 * 3).map(|i: u32| (i.wrapping_mul(2654435761).wrapping_add(seed) >> 24) as u8).collect();
        Image::rgb8(32, 24, data).unwrap()
    }

    #[test]
    fn identity_pair_has_zero_error() {
        let img = noise_image(1);
        let depth = Image::depth(32, 24, vec![2.5; 32 * 24]).unwrap();
        let p = Isometry3::translation(1.0, 2.0, 3.0);
        let r = photometric_sync_check(&img, &img, &depth, &cam(), &p, &p, &VerifyConfig::default()).unwrap();
        assert_eq!(r.mean_photometric_error, 0.0);
        assert_eq!(r.valid_pixel_fraction, 1.0);
        assert!(!r.sync_suspect);
    }

    #[test]
    fn unrelated_images_are_suspect() {
        let depth = Image::depth(32, 24, vec![2.5; 32 * 24]).unwrap();
        let p = Isometry3::identity();
        let r = photometric_sync_check(&noise_image(1), &noise_image(99_999_999), &depth, &cam(), &p, &p, &VerifyConfig::default())
            .unwrap();
        assert!(r.sync_suspect, "{r:?}");
    }

    #[test]
    fn no_valid_pixels_is_error() {
        let depth = Image::depth(32, 24, vec![f32::INFINITY; 32 * 24]).unwrap();
        let p = Isometry3::identity();
        let img = noise_image(0);
        assert!(matches!(
            photometric_sync_check(&img, &img, &depth, &cam(), &p, &p, &VerifyConfig::default()),
            Err(VerifyError::NoValidPixels)
        ));
    }

    #[test]
    fn collision_cases() {
        let mut z = vec![5.0f32; 16];
        assert!(!depth_collision_check(&Image::depth(4, 4, z.clone()).unwrap(), 0.1).unwrap().collision);
        z[3] = 0.05;
        let r = depth_collision_check(&Image::depth(4, 4, z).unwrap(), 0.1).unwrap();
        assert!(r.collision && (r.min_depth - 0.05).abs() < 1e-7);
        let sky = depth_collision_check(&Image::depth(2, 2, vec![f32::INFINITY; 4]).unwrap(), 0.1).unwrap();
        assert!(sky.min_depth.is_infinite() && !sky.collision);
        assert!(depth_collision_check(&Image::depth(2, 2, vec![1.0; 4]).unwrap(), 0.0).is_err());
    }
}
