//! Synthetic environments: labelled point-cloud scenes and analytic
//! ray-cast scenes that render exact cubemap and pinhole images.

use nalgebra::{Isometry3, Point3, Vector3};
use rayon::prelude::*;

use crate::camview::{face_pixel_ray, CubemapRig, DepthKind, FaceImages, PinholeCamera, FACES};
use crate::geomio::{Image, PointCloud};

pub const LABEL_FLOOR: u32 = 1;
pub const LABEL_WALL: u32 = 2;
pub const LABEL_PILLAR: u32 = 3;
pub const LABEL_RAMP: u32 = 4;
pub const LABEL_SLAB: u32 = 5;

#[derive(Default)]
struct CloudBuilder {
    points: Vec<Point3<f64>>,
    labels: Vec<u32>,
}

/// `lo, lo + spacing, ...` up to and always including `hi`.
fn steps(lo: f64, hi: f64, spacing: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / spacing + 1e-9).floor() as usize;
    let last = lo + n as f64 * spacing;
    let tail = (hi - last > 1e-9 * spacing.max(1.0)).then_some(hi);
    (0..=n).map(move |k| lo + k as f64 * spacing).chain(tail)
}

impl CloudBuilder {
    fn push(&mut self, p: Point3<f64>, label: u32) {
        self.points.push(p);
        self.labels.push(label);
    }

    /// Horizontal rectangle at height `z(x, y)`.
    fn surface(&mut self, x: [f64; 2], y: [f64; 2], spacing: f64, label: u32, z: impl Fn(f64, f64) -> f64) {
        for px in steps(x[0], x[1], spacing) {
            for py in steps(y[0], y[1], spacing) {
                self.push(Point3::new(px, py, z(px, py)), label);
            }
        }
    }

    /// Vertical wall along the segment `a -> b`.
    fn wall(&mut self, a: (f64, f64), b: (f64, f64), z: [f64; 2], spacing: f64) {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        for s in steps(0.0, len, spacing) {
            let t = s / len;
            for pz in steps(z[0], z[1], spacing) {
                self.push(Point3::new(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), pz), LABEL_WALL);
            }
        }
    }

    fn pillar(&mut self, c: (f64, f64), r: f64, height: f64, spacing: f64) {
        let n = ((2.0 * std::f64::consts::PI * r / spacing).ceil() as usize).max(8);
        for k in 0..n {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            for pz in steps(0.0, height, spacing) {
                self.push(Point3::new(c.0 + r * a.cos(), c.1 + r * a.sin(), pz), LABEL_PILLAR);
            }
        }
    }

    fn finish(self) -> PointCloud {
        PointCloud::new(self.points, Some(self.labels)).expect("finite synthetic points")
    }
}

/// Rectangular room `[0, w] x [0, d]` with 2.5 m walls and cylindrical pillars `(x, y, r)`.
pub fn room_with_pillars(w: f64, d: f64, pillars: &[(f64, f64, f64)], spacing: f64) -> PointCloud {
    let mut b = CloudBuilder::default();
    b.surface([0.0, w], [0.0, d], spacing, LABEL_FLOOR, |_, _| 0.0);
    for (p, q) in [((0.0, 0.0), (w, 0.0)), ((w, 0.0), (w, d)), ((w, d), (0.0, d)), ((0.0, d), (0.0, 0.0))] {
        b.wall(p, q, [0.0, 2.5], spacing);
    }
    for &(x, y, r) in pillars {
        b.pillar((x, y), r, 2.5, spacing);
    }
    b.finish()
}

/// Flat ground with a ramp of the given slope rising along +x from `x = 2`.
pub fn ramp_scene(slope: f64, spacing: f64) -> PointCloud {
    let mut b = CloudBuilder::default();
    b.surface([0.0, 10.0], [0.0, 4.0], spacing, LABEL_FLOOR, |x, _| if x < 2.0 { 0.0 } else { (x - 2.0) * slope });
    b.finish()
}

/// Staircase of `n` steps with the given rise and run, rising along +x.
pub fn stairs_scene(n: usize, rise: f64, run: f64, spacing: f64) -> PointCloud {
    let mut b = CloudBuilder::default();
    let end = 2.0 + n as f64 * run;
    b.surface([0.0, end + 2.0], [0.0, 3.0], spacing, LABEL_FLOOR, |x, _| {
        if x < 2.0 {
            0.0
        } else {
            (((x - 2.0) / run).floor() + 1.0).min(n as f64) * rise
        }
    });
    b.finish()
}

/// Two-storey building, 20 m x 10 m.
///
/// The ground floor spans the whole footprint. An upper floor at 3 m covers
/// `x <= 6` and is reached by a 2 m wide ramp (slope 0.3) descending along
/// +x from `x = 6` to `x = 16` at `y in [7, 9]`. Two pillars stand on the
/// ground floor.
pub fn two_floor_building(spacing: f64) -> PointCloud {
    let mut b = CloudBuilder::default();
    let (w, d, h) = (20.0, 10.0, 6.5);
    b.surface([0.0, w], [0.0, d], spacing, LABEL_FLOOR, |_, _| 0.0);
    b.surface([0.0, 6.0], [0.0, d], spacing, LABEL_SLAB, |_, _| 3.0);
    b.surface([0.0, 6.0], [0.0, d], spacing, LABEL_SLAB, |_, _| 2.8);
    b.surface([6.0 + spacing, 16.0], [7.0, 9.0], spacing, LABEL_RAMP, |x, _| 3.0 - 0.3 * (x - 6.0));
    for (p, q) in [((0.0, 0.0), (w, 0.0)), ((w, 0.0), (w, d)), ((w, d), (0.0, d)), ((0.0, d), (0.0, 0.0))] {
        b.wall(p, q, [0.0, h], spacing);
    }
    b.pillar((10.0, 3.0), 0.3, h, spacing);
    b.pillar((14.0, 5.0), 0.3, h, spacing);
    b.finish()
}

// ---------------------------------------------------------------------------
// Analytic scenes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Point3<f64>, radius: f64 },
    /// Infinite cylinder parallel to world z.
    CylinderZ { center: Point3<f64>, radius: f64 },
    Plane { point: Point3<f64>, normal: Vector3<f64> },
}

impl Shape {
    /// Smallest positive ray parameter of an intersection with a unit direction.
    pub fn intersect(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        const EPS: f64 = 1e-9;
        let first_positive = |a: f64, b: f64, c: f64| -> Option<f64> {
            if a <= 0.0 {
                return None;
            }
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            let (mut t0, mut t1) = (q / a, c / q);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            [t0, t1].into_iter().find(|&t| t > EPS && t.is_finite())
        };
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                first_positive(d.dot(d), 2.0 * oc.dot(d), oc.dot(&oc) - radius * radius)
            }
            Shape::CylinderZ { center, radius } => {
                let (ox, oy) = (o.x - center.x, o.y - center.y);
                first_positive(
                    d.x * d.x + d.y * d.y,
                    2.0 * (ox * d.x + oy * d.y),
                    ox * ox + oy * oy - radius * radius,
                )
            }
            Shape::Plane { point, normal } => {
                let den = d.dot(&normal);
                if den.abs() < 1e-15 {
                    return None;
                }
                let t = (point - o).dot(&normal) / den;
                (t > EPS).then_some(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyticScene {
    pub shapes: Vec<(Shape, u16)>,
}

/// Result of a ray cast: distance, label and hit point.
pub type Hit = (f64, u16, Point3<f64>);

impl AnalyticScene {
    pub fn sphere(radius: f64) -> Self {
        Self { shapes: vec![(Shape::Sphere { center: Point3::origin(), radius }, 1)] }
    }

    pub fn cylinder(radius: f64) -> Self {
        Self { shapes: vec![(Shape::CylinderZ { center: Point3::origin(), radius }, 1)] }
    }

    /// Textured ground plane plus a wall facing -x at distance `wall_x`.
    pub fn plane_and_wall(wall_x: f64) -> Self {
        Self {
            shapes: vec![
                (Shape::Plane { point: Point3::origin(), normal: Vector3::z() }, 1),
                (Shape::Plane { point: Point3::new(wall_x, 0.0, 0.0), normal: -Vector3::x() }, 2),
            ],
        }
    }

    pub fn cast(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        self.shapes
            .iter()
            .filter_map(|(s, l)| s.intersect(o, d).map(|t| (t, *l)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(t, l)| (t, l, o + d * t))
    }
}

/// Smooth procedural colour of a world point.
pub fn texture(p: &Point3<f64>) -> [u8; 3] {
    let f = |v: f64| (127.5 + 100.0 * v.sin()).round() as u8;
    [f(1.7 * p.x + 0.3 * p.z), f(1.3 * p.y - 0.5 * p.x), f(0.9 * p.z + 0.7 * p.y + 0.2 * p.x)]
}

/// Render all six faces (RGB, z-depth, labels) for a body at `body_to_world`.
pub fn render_rig(scene: &AnalyticScene, body_to_world: &Isometry3<f64>, size: usize) -> CubemapRig {
    let o = Point3::from(body_to_world.translation.vector);
    let faces: Vec<FaceImages> = FACES
        .par_iter()
        .map(|&f| {
            let n = size * size;
            let (mut rgb, mut depth, mut sem) = (Vec::with_capacity(3 * n), Vec::with_capacity(n), Vec::with_capacity(n));
            for v in 0..size {
                for u in 0..size {
                    let d_body = face_pixel_ray(f, size, u, v);
                    let d = body_to_world.rotation * d_body;
                    match scene.cast(&o, &d) {
                        Some((t, l, p)) => {
                            rgb.extend(texture(&p));
                            depth.push((t * d_body.dot(&f.axis())) as f32);
                            sem.push(l);
                        }
                        None => {
                            rgb.extend([0, 0, 0]);
                            depth.push(f32::INFINITY);
                            sem.push(0);
                        }
                    }
                }
            }
            FaceImages {
                rgb: Some(Image::rgb8(size, size, rgb).unwrap()),
                depth: Some(Image::depth(size, size, depth).unwrap()),
                semantic: Some(Image::labels16(size, size, sem).unwrap()),
            }
        })
        .collect();
    let faces: [FaceImages; 6] = faces.try_into().unwrap();
    CubemapRig::new(size, DepthKind::ZDepth, faces).expect("consistent faces")
}

/// Render a pinhole view: RGB, z-depth and labels.
pub fn render_pinhole(scene: &AnalyticScene, cam: &PinholeCamera, body_to_world: &Isometry3<f64>) -> (Image, Image, Image) {
    let o = Point3::from(body_to_world.translation.vector);
    let cam_to_body = cam.rotation.inverse();
    let rows: Vec<(Vec<u8>, Vec<f32>, Vec<u16>)> = (0..cam.height)
        .into_par_iter()
        .map(|v| {
            let mut row = (Vec::new(), Vec::new(), Vec::new());
            for u in 0..cam.width {
                let dc = cam.pixel_to_ray(u as f64, v as f64);
                let d = body_to_world.rotation * (cam_to_body * dc);
                match scene.cast(&o, &d) {
                    Some((t, l, p)) => {
                        row.0.extend(texture(&p));
                        row.1.push((t * dc.z) as f32);
                        row.2.push(l);
                    }
                    None => {
                        row.0.extend([0, 0, 0]);
                        row.1.push(f32::INFINITY);
                        row.2.push(0);
                    }
                }
            }
            row
        })
        .collect();
    let (w, h) = (cam.width, cam.height);
    let mut rgb = Vec::with_capacity(3 * w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut sem = Vec::with_capacity(w * h);
    for r in rows {
        rgb.extend(r.0);
        depth.extend(r.1);
        sem.extend(r.2);
    }
    (
        Image::rgb8(w, h, rgb).unwrap(),
        Image::depth(w, h, depth).unwrap(),
        Image::labels16(w, h, sem).unwrap(),
    )
}
