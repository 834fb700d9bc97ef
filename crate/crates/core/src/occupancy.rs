//! Semantic voxel occupancy: ground truth from labelled clouds, a
//! depth-projection baseline with gradient filtering, and windowed IoU.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Isometry3, Point3, Vector3};
use rayon::prelude::*;

use crate::camview::PinholeCamera;
use crate::derived::back_project;
use crate::geomio::{GeomIoError, Image, PointCloud};

pub const OCCUPANCY_MAGIC: &[u8; 4] = b"TGOC";

#[derive(Debug, thiserror::Error)]
pub enum OccupancyError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("resolutions differ: {0} vs {1}")]
    ResolutionMismatch(f64, f64),
    #[error("label {0} does not fit in 16 bits")]
    LabelRange(u32),
    #[error("malformed occupancy data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] GeomIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// World position of the lower corner of voxel (0, 0, 0).
    pub origin: Point3<f64>,
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Point3<f64>, resolution: f64, dims: [usize; 3]) -> Result<Self, OccupancyError> {
        let s = Self { origin, resolution, dims };
        s.validate()?;
        Ok(s)
    }

    /// Grid covering `ego +- range_xy` horizontally and `[ego.z + z_range[0], ego.z + z_range[1]]`.
    pub fn around(ego: Point3<f64>, range_xy: f64, z_range: [f64; 2], resolution: f64) -> Result<Self, OccupancyError> {
        let nxy = (2.0 * range_xy / resolution).ceil() as usize;
        let nz = ((z_range[1] - z_range[0]) / resolution).ceil() as usize;
        Self::new(Point3::new(ego.x - range_xy, ego.y - range_xy, ego.z + z_range[0]), resolution, [nxy, nxy, nz])
    }

    pub fn validate(&self) -> Result<(), OccupancyError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(OccupancyError::InvalidGrid(format!("resolution {}", self.resolution)));
        }
        if self.dims.contains(&0) || self.dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(OccupancyError::InvalidGrid(format!("dims {:?}", self.dims)));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite() && self.origin.z.is_finite()) {
            return Err(OccupancyError::InvalidGrid("non-finite origin".into()));
        }
        Ok(())
    }

    pub fn num_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn linear(&self, v: [usize; 3]) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    pub fn unlinear(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Voxel holding `p`: `floor((p - origin) / resolution)`.
    pub fn voxel_of(&self, p: &Point3<f64>) -> Option<[usize; 3]> {
        let q = (p - self.origin) / self.resolution;
        let mut out = [0; 3];
        for a in 0..3 {
            let f = q[a].floor();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    pub fn center(&self, v: [usize; 3]) -> Point3<f64> {
        self.origin + Vector3::new(v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5) * self.resolution
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub spec: GridSpec,
    pub occupied: Vec<bool>,
    /// Semantic id per voxel; 0 for unlabelled and for every free voxel.
    pub labels: Vec<u16>,
}

impl OccupancyGrid {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.num_voxels();
        Self { spec, occupied: vec![false; n], labels: vec![0; n] }
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn set(&mut self, v: [usize; 3], label: u16) {
        let i = self.spec.linear(v);
        self.occupied[i] = true;
        self.labels[i] = label;
    }

    /// Occupied voxels as `(i, j, k, label)`, in linear-index order.
    pub fn occupied_voxels(&self) -> Vec<([usize; 3], u16)> {
        (0..self.occupied.len()).filter(|&i| self.occupied[i]).map(|i| (self.spec.unlinear(i), self.labels[i])).collect()
    }
}

/// Bin points into voxels; a voxel is occupied with at least `min_points`
/// points and takes the majority label (ties to the smaller id).
pub fn occupancy_from_cloud(cloud: &PointCloud, spec: &GridSpec, min_points: usize) -> Result<OccupancyGrid, OccupancyError> {
    spec.validate()?;
    let labels = cloud.labels();
    let mut keyed: Vec<(usize, u16)> = cloud
        .points()
        .par_iter()
        .enumerate()
        .filter_map(|(k, p)| spec.voxel_of(p).map(|v| (k, spec.linear(v))))
        .map(|(k, idx)| {
            let l = labels.map_or(0, |l| l[k]);
            u16::try_from(l).map(|l| (idx, l)).map_err(|_| OccupancyError::LabelRange(l))
        })
        .collect::<Result<_, _>>()?;
    keyed.par_sort_unstable();
    let mut grid = OccupancyGrid::empty(*spec);
    if keyed.is_empty() {
        log::warn!("no points fall inside the occupancy grid");
        return Ok(grid);
    }
    let min_points = min_points.max(1);
    let mut start = 0;
    while start < keyed.len() {
        let idx = keyed[start].0;
        let end = start + keyed[start..].partition_point(|e| e.0 == idx);
        if end - start >= min_points {
            // Runs of equal labels are contiguous and ascending, so the first
            // longest run is the smallest majority label.
            let (mut best, mut best_n) = (keyed[start].1, 0);
            let mut r = start;
            while r < end {
                let l = keyed[r].1;
                let n = keyed[r..end].partition_point(|e| e.1 == l);
                if n > best_n {
                    best = l;
                    best_n = n;
                }
                r += n;
            }
            grid.occupied[idx] = true;
            grid.labels[idx] = best;
        }
        start = end;
    }
    Ok(grid)
}

/// Depth edge mask: a pixel is valid when its depth is finite and differs
/// from each existing 4-neighbour by at most `rel_threshold * z`.
pub fn gradient_filter(depth: &Image, rel_threshold: f64) -> Result<Vec<bool>, OccupancyError> {
    if !(rel_threshold > 0.0) {
        return Err(OccupancyError::InvalidGrid(format!("rel_threshold {rel_threshold} must be positive")));
    }
    depth.validate_depth()?;
    let z = depth.as_f32().unwrap();
    let (w, h) = (depth.width(), depth.height());
    Ok((0..w * h)
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let zi = z[i] as f64;
            if !zi.is_finite() {
                return false;
            }
            let lim = rel_threshold * zi;
            let mut nbrs = [None; 4];
            if u > 0 {
                nbrs[0] = Some(i - 1);
            }
            if u + 1 < w {
                nbrs[1] = Some(i + 1);
            }
            if v > 0 {
                nbrs[2] = Some(i - w);
            }
            if v + 1 < h {
                nbrs[3] = Some(i + w);
            }
            nbrs.iter().flatten().all(|&n| (z[n] as f64 - zi).abs() <= lim)
        })
        .collect())
}

/// World points of every gradient-valid pixel of the given views.
pub fn project_depth_views(
    views: &[(Image, PinholeCamera)],
    body_to_world: &Isometry3<f64>,
    rel_threshold: f64,
) -> Result<Vec<Point3<f64>>, OccupancyError> {
    let mut pts = Vec::new();
    for (depth, cam) in views {
        if (depth.width(), depth.height()) != (cam.width, cam.height) {
            return Err(OccupancyError::InvalidGrid("depth size differs from its camera".into()));
        }
        let mask = gradient_filter(depth, rel_threshold)?;
        let z = depth.as_f32().unwrap();
        let cam_to_world = body_to_world * Isometry3::from_parts(Default::default(), cam.rotation.inverse());
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let (u, v) = ((i % cam.width) as f64, (i / cam.width) as f64);
            pts.push(cam_to_world * Point3::from(back_project(cam, u, v, z[i] as f64)));
        }
    }
    Ok(pts)
}

/// Depth-projection baseline: unlabelled occupancy of all gradient-valid pixels.
pub fn occupancy_from_depth(
    views: &[(Image, PinholeCamera)],
    body_to_world: &Isometry3<f64>,
    spec: &GridSpec,
    rel_threshold: f64,
) -> Result<OccupancyGrid, OccupancyError> {
    let pts = project_depth_views(views, body_to_world, rel_threshold)?;
    if pts.is_empty() {
        return Ok(OccupancyGrid::empty(*spec));
    }
    occupancy_from_cloud(&PointCloud::new(pts, None)?, spec, 1)
}

/// Evaluation window around the ego position.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalWindow {
    pub ego: Point3<f64>,
    pub range_xy: f64,
    /// z limits relative to `ego.z`.
    pub z_range: [f64; 2],
}

impl EvalWindow {
    pub fn new(ego: Point3<f64>) -> Self {
        Self { ego, range_xy: 25.0, z_range: [-2.0, 8.0] }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (p.x - self.ego.x).abs() <= self.range_xy
            && (p.y - self.ego.y).abs() <= self.range_xy
            && p.z >= self.ego.z + self.z_range[0]
            && p.z <= self.ego.z + self.z_range[1]
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IouReport {
    pub iou: f64,
    pub intersection: usize,
    pub union: usize,
    /// IoU of voxels carrying each label, over labels present in either grid.
    pub per_class: BTreeMap<u16, f64>,
}

fn windowed(g: &OccupancyGrid, w: &EvalWindow) -> BTreeMap<[i64; 3], u16> {
    let r = g.spec.resolution;
    g.occupied_voxels()
        .into_iter()
        .filter_map(|(v, l)| {
            let c = g.spec.center(v);
            w.contains(&c).then(|| ([(c.x / r).floor() as i64, (c.y / r).floor() as i64, (c.z / r).floor() as i64], l))
        })
        .collect()
}

fn ratio(inter: usize, union: usize) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Intersection over union of occupied voxels inside `window`. Voxels are
/// matched by their world centres, so grids may have different origins.
pub fn occupancy_iou(pred: &OccupancyGrid, gt: &OccupancyGrid, window: &EvalWindow) -> Result<IouReport, OccupancyError> {
    let (ra, rb) = (pred.spec.resolution, gt.spec.resolution);
    if (ra - rb).abs() > 1e-9 * ra.max(rb) {
        return Err(OccupancyError::ResolutionMismatch(ra, rb));
    }
    let a = windowed(pred, window);
    let b = windowed(gt, window);
    let inter = a.keys().filter(|k| b.contains_key(*k)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        log::warn!("both grids are empty inside the evaluation window; IoU defined as 1");
    }
    let classes: BTreeSet<u16> = a.values().chain(b.values()).copied().collect();
    let per_class = classes
        .into_iter()
        .map(|c| {
            let ka: BTreeSet<_> = a.iter().filter(|(_, &l)| l == c).map(|(k, _)| *k).collect();
            let kb: BTreeSet<_> = b.iter().filter(|(_, &l)| l == c).map(|(k, _)| *k).collect();
            let i = ka.intersection(&kb).count();
            (c, ratio(i, ka.len() + kb.len() - i))
        })
        .collect();
    Ok(IouReport { iou: ratio(inter, union), intersection: inter, union, per_class })
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

pub fn write_occupancy<W: Write>(g: &OccupancyGrid, mut w: W) -> Result<(), OccupancyError> {
    let s = &g.spec;
    let mut buf = Vec::with_capacity(48 + g.occupied.len() / 8 + 2 * g.labels.len() + 1);
    buf.extend_from_slice(OCCUPANCY_MAGIC);
    for v in [s.origin.x, s.origin.y, s.origin.z, s.resolution] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for d in s.dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let mut bits = vec![0u8; g.occupied.len().div_ceil(8)];
    for (i, &o) in g.occupied.iter().enumerate() {
        if o {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    buf.extend_from_slice(&bits);
    for l in &g.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_occupancy<R: Read>(mut r: R) -> Result<OccupancyGrid, OccupancyError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 48 || &bytes[..4] != OCCUPANCY_MAGIC {
        return Err(OccupancyError::Format("missing TGOC header".into()));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let spec = GridSpec::new(Point3::new(f(4), f(12), f(20)), f(28), [u(36), u(40), u(44)])?;
    let n = spec.num_voxels();
    let nbits = n.div_ceil(8);
    let expected = 48 + nbits + 2 * n;
    if bytes.len() != expected {
        return Err(OccupancyError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let occupied: Vec<bool> = (0..n).map(|i| bytes[48 + i / 8] >> (i % 8) & 1 == 1).collect();
    let lo = 48 + nbits;
    let labels: Vec<u16> = (0..n).map(|i| u16::from_le_bytes([bytes[lo + 2 * i], bytes[lo + 2 * i + 1]])).collect();
    if let Some(i) = (0..n).find(|&i| !occupied[i] && labels[i] != 0) {
        return Err(OccupancyError::Format(format!("free voxel {i} carries label {}", labels[i])));
    }
    Ok(OccupancyGrid { spec, occupied, labels })
}

pub fn save_occupancy(g: &OccupancyGrid, path: &Path) -> Result<(), OccupancyError> {
    write_occupancy(g, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_occupancy(path: &Path) -> Result<OccupancyGrid, OccupancyError> {
    read_occupancy(std::fs::File::open(path)?)
}

/// Text listing: a header with the grid spec, then `i j k label` per occupied voxel.
pub fn format_occupancy_text(g: &OccupancyGrid) -> String {
    let s = &g.spec;
    let mut out = format!(
        "# origin {} {} {} resolution {} dims {} {} {}\n",
        s.origin.x, s.origin.y, s.origin.z, s.resolution, s.dims[0], s.dims[1], s.dims[2]
    );
    for ([i, j, k], l) in g.occupied_voxels() {
        let _ = writeln!(out, "{i} {j} {k} {l}");
    }
    out
}

pub fn parse_occupancy_text(text: &str) -> Result<OccupancyGrid, OccupancyError> {
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let bad = |m: &str| OccupancyError::Format(m.to_string());
    if head.len() != 11 || head[0] != "#" || head[1] != "origin" || head[5] != "resolution" || head[7] != "dims" {
        return Err(bad("header must read '# origin x y z resolution r dims nx ny nz'"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number in header"));
    let dim = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension in header"));
    let spec = GridSpec::new(
        Point3::new(num(head[2])?, num(head[3])?, num(head[4])?),
        num(head[6])?,
        [dim(head[8])?, dim(head[9])?, dim(head[10])?],
    )?;
    let mut g = OccupancyGrid::empty(spec);
    for (n, line) in lines.enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| OccupancyError::Format(format!("line {}: expected integers", n + 2)))?;
        if f.len() != 4 || f[0] >= spec.dims[0] || f[1] >= spec.dims[1] || f[2] >= spec.dims[2] || f[3] > u16::MAX as usize {
            return Err(OccupancyError::Format(format!("line {}: bad voxel record", n + 2)));
        }
        g.set([f[0], f[1], f[2]], f[3] as u16);
    }
    Ok(g)
}
