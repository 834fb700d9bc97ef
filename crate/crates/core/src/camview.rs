//! Pinhole cameras, the six-face cubemap rig and view resampling.
//!
//! Camera frames are z forward, x right, y down. The body frame is x
//! forward, y left, z up. A camera's `rotation` maps body vectors into the
//! camera frame. Pixel `(u, v)` has its centre at continuous image
//! coordinate `(u + 0.5, v + 0.5)`.
//!
//! Cubemap depth is z-depth along each face's optical axis unless the rig
//! declares [`DepthKind::Range`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::geomio::{load_image, save_image_auto, GeomIoError, Image, PixelData, PointCloud};

#[derive(Debug, thiserror::Error)]
pub enum CamError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("direction has zero length")]
    ZeroDirection,
    #[error("face {face} has no {modality} image")]
    MissingModality { face: &'static str, modality: &'static str },
    #[error("rig images disagree in size or type: {0}")]
    RigMismatch(String),
    #[error("LiDAR pattern is empty")]
    EmptyPattern,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] GeomIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Front,
    Left,
    Right,
    Back,
    Top,
    Bottom,
}

/// Storage order of faces in a rig.
pub const FACES: [Face; 6] = [Face::Front, Face::Left, Face::Right, Face::Back, Face::Top, Face::Bottom];

impl Face {
    pub fn index(self) -> usize {
        FACES.iter().position(|&f| f == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::Front => "front",
            Face::Left => "left",
            Face::Right => "right",
            Face::Back => "back",
            Face::Top => "top",
            Face::Bottom => "bottom",
        }
    }

    pub fn from_name(s: &str) -> Option<Face> {
        FACES.iter().copied().find(|f| f.name() == s)
    }

    /// Body-to-camera matrix; rows are the camera x, y, z axes in body coordinates.
    pub fn matrix(self) -> Matrix3<f64> {
        let rows: [[f64; 3]; 3] = match self {
            Face::Front => [[0., -1., 0.], [0., 0., -1.], [1., 0., 0.]],
            Face::Left => [[1., 0., 0.], [0., 0., -1.], [0., 1., 0.]],
            Face::Right => [[-1., 0., 0.], [0., 0., -1.], [0., -1., 0.]],
            Face::Back => [[0., 1., 0.], [0., 0., -1.], [-1., 0., 0.]],
            Face::Top => [[0., -1., 0.], [1., 0., 0.], [0., 0., 1.]],
            Face::Bottom => [[0., -1., 0.], [-1., 0., 0.], [0., 0., -1.]],
        };
        Matrix3::from_fn(|r, c| rows[r][c])
    }

    pub fn rotation(self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.matrix()))
    }

    /// Optical axis in the body frame.
    pub fn axis(self) -> Vector3<f64> {
        self.matrix().row(2).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Body-to-camera rotation.
    pub rotation: UnitQuaternion<f64>,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rotation: UnitQuaternion<f64>,
    ) -> Result<Self, CamError> {
        let cam = Self { fx, fy, cx, cy, width, height, rotation };
        cam.validate()?;
        Ok(cam)
    }

    /// Square 90 degree camera looking through `face`.
    pub fn face(face: Face, size: usize) -> Self {
        let h = size as f64 / 2.0;
        Self { fx: h, fy: h, cx: h, cy: h, width: size, height: size, rotation: face.rotation() }
    }

    pub fn validate(&self) -> Result<(), CamError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(CamError::InvalidCamera(format!("{self:?}")))
        }
    }

    /// Unit ray through the centre of pixel `(u, v)`, camera frame.
    pub fn pixel_to_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u + 0.5 - self.cx) / self.fx, (v + 0.5 - self.cy) / self.fy, 1.0).normalize()
    }

    /// Pixel index coordinates of a camera-frame direction; inverse of
    /// [`pixel_to_ray`](Self::pixel_to_ray). `None` behind the camera.
    pub fn project(&self, d: &Vector3<f64>) -> Option<(f64, f64)> {
        (d.z > 0.0).then(|| (self.fx * d.x / d.z + self.cx - 0.5, self.fy * d.y / d.z + self.cy - 0.5))
    }

    /// Horizontal and vertical field of view, radians.
    pub fn fov(&self) -> (f64, f64) {
        let w = self.width as f64;
        let h = self.height as f64;
        (
            (self.cx / self.fx).atan() + ((w - self.cx) / self.fx).atan(),
            (self.cy / self.fy).atan() + ((h - self.cy) / self.fy).atan(),
        )
    }
}

/// Face hit by a body-frame direction, with continuous image coordinates
/// (pixel centres at `k + 0.5`) clamped into `[0, size)`.
pub fn ray_to_face(d: &Vector3<f64>, size: usize) -> Result<(Face, f64, f64), CamError> {
    if !(d.norm() > 0.0) {
        return Err(CamError::ZeroDirection);
    }
    let cands = [
        (Face::Front, d.x),
        (Face::Back, -d.x),
        (Face::Left, d.y),
        (Face::Right, -d.y),
        (Face::Top, d.z),
        (Face::Bottom, -d.z),
    ];
    let mut best = cands[0];
    for c in &cands[1..] {
        if c.1 > best.1 {
            best = *c;
        }
    }
    let face = best.0;
    let c = face.matrix() * d;
    let h = size as f64 / 2.0;
    let hi = size as f64 - 1e-9;
    let u = (h * c.x / c.z + h).clamp(0.0, hi);
    let v = (h * c.y / c.z + h).clamp(0.0, hi);
    Ok((face, u, v))
}

/// Body-frame unit ray through the centre of face pixel `(iu, iv)`.
pub fn face_pixel_ray(face: Face, size: usize, iu: usize, iv: usize) -> Vector3<f64> {
    let h = size as f64 / 2.0;
    let c = Vector3::new((iu as f64 + 0.5 - h) / h, (iv as f64 + 0.5 - h) / h, 1.0).normalize();
    face.matrix().transpose() * c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    /// Distance along the face optical axis.
    #[default]
    ZDepth,
    /// Euclidean distance along the pixel ray.
    Range,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaceImages {
    pub rgb: Option<Image>,
    pub depth: Option<Image>,
    pub semantic: Option<Image>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb,
    Depth,
    Semantic,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
            Modality::Semantic => "semantic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubemapRig {
    pub size: usize,
    pub depth_kind: DepthKind,
    /// Indexed in [`FACES`] order.
    pub faces: [FaceImages; 6],
}

impl CubemapRig {
    pub fn new(size: usize, depth_kind: DepthKind, faces: [FaceImages; 6]) -> Result<Self, CamError> {
        let rig = Self { size, depth_kind, faces };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), CamError> {
        if self.size == 0 {
            return Err(CamError::RigMismatch("face size is zero".into()));
        }
        for (f, imgs) in FACES.iter().zip(&self.faces) {
            for (m, img) in [("rgb", &imgs.rgb), ("depth", &imgs.depth), ("semantic", &imgs.semantic)] {
                if let Some(img) = img {
                    if img.width() != self.size || img.height() != self.size {
                        return Err(CamError::RigMismatch(format!("{} {m} is not {}x{}", f.name(), self.size, self.size)));
                    }
                }
            }
            if let Some(d) = &imgs.depth {
                d.validate_depth()?;
            }
        }
        Ok(())
    }

    pub fn face(&self, f: Face) -> &FaceImages {
        &self.faces[f.index()]
    }

    fn image(&self, f: Face, m: Modality) -> Result<&Image, CamError> {
        let imgs = self.face(f);
        match m {
            Modality::Rgb => imgs.rgb.as_ref(),
            Modality::Depth => imgs.depth.as_ref(),
            Modality::Semantic => imgs.semantic.as_ref(),
        }
        .ok_or(CamError::MissingModality { face: f.name(), modality: m.name() })
    }

    /// Range along the centre ray of face pixel `(iu, iv)`.
    pub fn range_at(&self, f: Face, iu: usize, iv: usize) -> Result<f64, CamError> {
        let img = self.image(f, Modality::Depth)?;
        let z = img.get(iu, iv, 0);
        Ok(match self.depth_kind {
            DepthKind::Range => z,
            DepthKind::ZDepth => {
                if z.is_infinite() {
                    z
                } else {
                    z / face_pixel_ray(f, self.size, iu, iv).dot(&f.axis())
                }
            }
        })
    }
}

fn nearest_index(u: f64, size: usize) -> usize {
    (u.floor() as usize).min(size - 1)
}

/// Render `target` from the rig.
///
/// RGB may be sampled bilinearly within a face (nearest across seams);
/// depth and semantics always use nearest. Depth output is z-depth along
/// the target optical axis.
pub fn resample_view(
    rig: &CubemapRig,
    target: &PinholeCamera,
    modality: Modality,
    sampling: Sampling,
) -> Result<Image, CamError> {
    target.validate()?;
    let srcs: Vec<&Image> = FACES.iter().map(|&f| rig.image(f, modality)).collect::<Result<_, _>>()?;
    let channels = srcs[0].channels();
    let kind = std::mem::discriminant(srcs[0].data());
    if srcs.iter().any(|s| s.channels() != channels || std::mem::discriminant(s.data()) != kind) {
        return Err(CamError::RigMismatch(format!("{} faces differ in pixel type", modality.name())));
    }
    let inv = target.rotation.inverse().to_rotation_matrix();
    let axis_t = inv * Vector3::z();
    let (w, h, size) = (target.width, target.height, rig.size);
    let bilinear = sampling == Sampling::Bilinear && modality == Modality::Rgb;

    // Per target pixel: face, continuous coordinates, body-frame ray.
    let lookup = |u: usize, v: usize| {
        let d = inv * target.pixel_to_ray(u as f64, v as f64);
        let (f, fu, fv) = ray_to_face(&d, size).expect("unit ray");
        (f, fu, fv, d)
    };

    let out = match modality {
        Modality::Depth => {
            let rows: Vec<Vec<f32>> = (0..h)
                .into_par_iter()
                .map(|v| {
                    (0..w)
                        .map(|u| {
                            let (f, fu, fv, d) = lookup(u, v);
                            let (iu, iv) = (nearest_index(fu, size), nearest_index(fv, size));
                            let r = rig.range_at(f, iu, iv).expect("checked above");
                            if r.is_infinite() {
                                f32::INFINITY
                            } else {
                                (r * d.dot(&axis_t)) as f32
                            }
                        })
                        .collect()
                })
                .collect();
            Image::float(w, h, 1, rows.concat())?
        }
        _ => {
            let sample = |u: usize, v: usize, out: &mut Vec<f64>| {
                let (f, fu, fv, _) = lookup(u, v);
                let src = srcs[f.index()];
                let (x, y) = (fu - 0.5, fv - 0.5);
                let (x0, y0) = (x.floor(), y.floor());
                if bilinear && x0 >= 0.0 && y0 >= 0.0 && x0 + 1.0 < size as f64 && y0 + 1.0 < size as f64 {
                    let (ax, ay) = (x - x0, y - y0);
                    let (x0, y0) = (x0 as usize, y0 as usize);
                    for c in 0..channels {
                        let top = src.get(x0, y0, c) * (1.0 - ax) + src.get(x0 + 1, y0, c) * ax;
                        let bot = src.get(x0, y0 + 1, c) * (1.0 - ax) + src.get(x0 + 1, y0 + 1, c) * ax;
                        out.push(top * (1.0 - ay) + bot * ay);
                    }
                } else {
                    let (iu, iv) = (nearest_index(fu, size), nearest_index(fv, size));
                    for c in 0..channels {
                        out.push(src.get(iu, iv, c));
                    }
                }
            };
            let rows: Vec<Vec<f64>> = (0..h)
                .into_par_iter()
                .map(|v| {
                    let mut row = Vec::with_capacity(w * channels);
                    for u in 0..w {
                        sample(u, v, &mut row);
                    }
                    row
                })
                .collect();
            let vals = rows.concat();
            let data = match srcs[0].data() {
                PixelData::U8(_) => PixelData::U8(vals.iter().map(|&x| x.round().clamp(0.0, 255.0) as u8).collect()),
                PixelData::U16(_) => PixelData::U16(vals.iter().map(|&x| x as u16).collect()),
                PixelData::F32(_) => PixelData::F32(vals.iter().map(|&x| x as f32).collect()),
            };
            Image::new(w, h, channels, data)?
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LidarPattern {
    pub channels: usize,
    /// Lowest and highest elevation, radians.
    pub vfov: [f64; 2],
    pub azimuth_steps: usize,
}

impl LidarPattern {
    pub fn elevations(&self) -> Vec<f64> {
        let [lo, hi] = self.vfov;
        if self.channels == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..self.channels).map(|c| lo + (hi - lo) * c as f64 / (self.channels - 1) as f64).collect()
    }
}

/// Body-frame point cloud from a ring pattern cast into the rig depth.
/// Rays whose depth is `+inf` produce no point.
pub fn lidar_from_cubemap(rig: &CubemapRig, pattern: &LidarPattern) -> Result<PointCloud, CamError> {
    if pattern.channels == 0 || pattern.azimuth_steps == 0 {
        return Err(CamError::EmptyPattern);
    }
    let mut pts = Vec::with_capacity(pattern.channels * pattern.azimuth_steps);
    for el in pattern.elevations() {
        for a in 0..pattern.azimuth_steps {
            let az = 2.0 * std::f64::consts::PI * a as f64 / pattern.azimuth_steps as f64;
            let d = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let (f, fu, fv) = ray_to_face(&d, rig.size)?;
            let r = rig.range_at(f, nearest_index(fu, rig.size), nearest_index(fv, rig.size))?;
            if r.is_finite() {
                pts.push(Point3::from(d * r));
            }
        }
    }
    Ok(PointCloud::new(pts, None)?)
}

// ---------------------------------------------------------------------------
// Manifest and camera files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FacePaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rgb: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semantic: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RigManifest {
    pub face_size: usize,
    #[serde(default)]
    pub depth_kind: DepthKind,
    /// Free-form reference to the body pose the rig was captured at.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_ref: Option<String>,
    pub faces: BTreeMap<String, FacePaths>,
}

fn load_opt(base: &Path, p: &Option<PathBuf>) -> Result<Option<Image>, CamError> {
    p.as_ref().map(|p| load_image(&base.join(p))).transpose().map_err(CamError::from)
}

/// Load a rig from a TOML manifest; image paths are relative to the manifest.
pub fn load_rig(manifest_path: &Path) -> Result<CubemapRig, CamError> {
    let text = std::fs::read_to_string(manifest_path).map_err(GeomIoError::from)?;
    let m: RigManifest = toml::from_str(&text).map_err(|e| CamError::Manifest(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    for k in m.faces.keys() {
        if Face::from_name(k).is_none() {
            return Err(CamError::Manifest(format!("unknown face {k:?}")));
        }
    }
    let mut faces: [FaceImages; 6] = Default::default();
    for f in FACES {
        let Some(p) = m.faces.get(f.name()) else {
            return Err(CamError::Manifest(format!("face {:?} missing", f.name())));
        };
        faces[f.index()] = FaceImages {
            rgb: load_opt(base, &p.rgb)?,
            depth: load_opt(base, &p.depth)?,
            semantic: load_opt(base, &p.semantic)?,
        };
    }
    CubemapRig::new(m.face_size, m.depth_kind, faces)
}

/// Write every face image into `dir` plus `rig.toml`; returns the manifest path.
pub fn save_rig(rig: &CubemapRig, dir: &Path) -> Result<PathBuf, CamError> {
    std::fs::create_dir_all(dir).map_err(GeomIoError::from)?;
    let mut faces = BTreeMap::new();
    for f in FACES {
        let imgs = rig.face(f);
        let mut paths = FacePaths::default();
        let put = |img: &Option<Image>, suffix: &str, ext: &str| -> Result<Option<PathBuf>, CamError> {
            let Some(img) = img else { return Ok(None) };
            let name = PathBuf::from(format!("{}_{suffix}.{ext}", f.name()));
            save_image_auto(img, &dir.join(&name))?;
            Ok(Some(name))
        };
        paths.rgb = put(&imgs.rgb, "rgb", "ppm")?;
        paths.depth = put(&imgs.depth, "depth", "pfm")?;
        paths.semantic = put(&imgs.semantic, "semantic", "pgm")?;
        faces.insert(f.name().to_string(), paths);
    }
    let m = RigManifest { face_size: rig.size, depth_kind: rig.depth_kind, pose_ref: None, faces };
    let path = dir.join("rig.toml");
    std::fs::write(&path, toml::to_string(&m).map_err(|e| CamError::Manifest(e.to_string()))?)
        .map_err(GeomIoError::from)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Body-to-camera quaternion `[qx, qy, qz, qw]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 4]>,
    /// Use the rotation of a cubemap face instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<String>,
}

impl CameraFile {
    pub fn from_camera(cam: &PinholeCamera) -> Self {
        let q = cam.rotation.quaternion();
        Self {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            rotation: Some([q.i, q.j, q.k, q.w]),
            face: None,
        }
    }

    pub fn to_camera(&self) -> Result<PinholeCamera, CamError> {
        let rotation = match (&self.rotation, &self.face) {
            (Some(_), Some(_)) => return Err(CamError::InvalidCamera("give either rotation or face".into())),
            (Some([x, y, z, w]), None) => {
                let q = nalgebra::Quaternion::new(*w, *x, *y, *z);
                if (q.norm() - 1.0).abs() > crate::geomio::QUAT_REJECT_TOL {
                    return Err(CamError::InvalidCamera(format!("rotation norm {} is not unit", q.norm())));
                }
                UnitQuaternion::from_quaternion(q)
            }
            (None, Some(f)) => {
                Face::from_name(f).ok_or_else(|| CamError::InvalidCamera(format!("unknown face {f:?}")))?.rotation()
            }
            (None, None) => UnitQuaternion::identity(),
        };
        PinholeCamera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, rotation)
    }
}

pub fn load_camera(path: &Path) -> Result<PinholeCamera, CamError> {
    let text = std::fs::read_to_string(path).map_err(GeomIoError::from)?;
    let f: CameraFile = toml::from_str(&text).map_err(|e| CamError::Manifest(e.to_string()))?;
    f.to_camera()
}

pub fn save_camera(cam: &PinholeCamera, path: &Path) -> Result<(), CamError> {
    let text = toml::to_string(&CameraFile::from_camera(cam)).map_err(|e| CamError::Manifest(e.to_string()))?;
    std::fs::write(path, text).map_err(GeomIoError::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_matrices_are_rotations() {
        for f in FACES {
            let m = f.matrix();
            assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-15);
            assert!((m.determinant() - 1.0).abs() < 1e-15);
            assert!((f.rotation().to_rotation_matrix().matrix() - m).norm() < 1e-12);
        }
        assert_eq!(Face::Left.axis(), Vector3::y());
        assert_eq!(Face::Bottom.axis(), -Vector3::z());
    }

    #[test]
    fn principal_pixel_is_optical_axis() {
        let cam = PinholeCamera::new(100.0, 100.0, 50.5, 40.5, 101, 81, UnitQuaternion::identity()).unwrap();
        let r = cam.pixel_to_ray(50.0, 40.0);
        assert!((r - Vector3::z()).norm() < 1e-15);
        let (u, v) = cam.project(&cam.pixel_to_ray(13.0, 77.0)).unwrap();
        assert!((u - 13.0).abs() < 1e-12 && (v - 77.0).abs() < 1e-12);
    }

    #[test]
    fn corner_pixel_angle() {
        let n = 64;
        let cam = PinholeCamera::face(Face::Front, n);
        let r = cam.pixel_to_ray(0.0, 0.0);
        let half = (n as f64 / 2.0 - 0.5) / (n as f64 / 2.0);
        let expected = (half * 2f64.sqrt()).atan();
        assert!((r.z.acos() - expected).abs() < 1e-12);
        assert!((cam.fov().0 - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn axis_directions_hit_face_centres() {
        let (f, u, v) = ray_to_face(&Vector3::x(), 32).unwrap();
        assert_eq!((f, u, v), (Face::Front, 16.0, 16.0));
        let (f, u, v) = ray_to_face(&Vector3::z(), 32).unwrap();
        assert_eq!((f, u, v), (Face::Top, 16.0, 16.0));
        assert!(matches!(ray_to_face(&Vector3::zeros(), 32), Err(CamError::ZeroDirection)));
    }

    #[test]
    fn ties_follow_face_order() {
        assert_eq!(ray_to_face(&Vector3::new(1.0, 1.0, 1.0), 8).unwrap().0, Face::Front);
        assert_eq!(ray_to_face(&Vector3::new(-1.0, 1.0, 0.0), 8).unwrap().0, Face::Back);
        assert_eq!(ray_to_face(&Vector3::new(0.0, -1.0, -1.0), 8).unwrap().0, Face::Right);
    }

    #[test]
    fn camera_file_round_trip() {
        let cam = PinholeCamera::new(300.0, 310.0, 160.0, 120.0, 320, 240, Face::Left.rotation()).unwrap();
        let back = CameraFile::from_camera(&cam).to_camera().unwrap();
        assert_eq!(back.fx, cam.fx);
        assert!(back.rotation.angle_to(&cam.rotation) < 1e-12);
        let f = CameraFile { rotation: None, face: Some("top".into()), ..CameraFile::from_camera(&cam) };
        assert!(f.to_camera().unwrap().rotation.angle_to(&Face::Top.rotation()) < 1e-12);
        assert!(PinholeCamera::new(1.0, 1.0, 0.0, 1.0, 4, 4, UnitQuaternion::identity()).is_err());
    }

    #[test]
    fn empty_lidar_pattern() {
        let rig = CubemapRig::new(4, DepthKind::ZDepth, Default::default()).unwrap();
        let p = LidarPattern { channels: 0, vfov: [0.0, 0.0], azimuth_steps: 4 };
        assert!(matches!(lidar_from_cubemap(&rig, &p), Err(CamError::EmptyPattern)));
    }
}
