//! Multi-layer tomogram slices and geometric traversability scoring.
//!
//! A tomogram stacks 2D grids at fixed height intervals. For the slice with
//! base height `h`, each cell stores the highest point at or below `h`
//! (ground) and the lowest point more than `max_step` above that ground
//! (ceiling). Slices keep all layers, so open ground reappears in every slice
//! above it; planners move between slices where the ground heights agree.
//!
//! Scoring marks a cell blocked when overhead clearance, step height to any
//! 8-neighbour or fitted slope exceeds the robot limits, then dilates the
//! blocked set by the robot footprint. Free cells get
//! `w_slope * slope / max_slope + w_step * step / max_step`, clamped to `[0, 1]`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

use crate::geomio::PointCloud;

pub const TOMOGRAM_MAGIC: &[u8; 4] = b"TGTM";

/// Heights within this distance of a slice base count as below it.
const SLICE_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum TomogramError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud has zero XY extent")]
    DegenerateExtent,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("tomogram file: {0}")]
    Format(String),
}

/// Geometric capabilities of the robot.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RobotSpec {
    /// Radians, strictly below pi/2.
    pub max_slope: f64,
    /// Meters.
    pub max_step: f64,
    /// Required overhead clearance, meters.
    pub min_clearance: f64,
    /// Footprint inflation radius, meters.
    pub radius: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self { max_slope: 0.5, max_step: 0.25, min_clearance: 1.0, radius: 0.3 }
    }
}

impl RobotSpec {
    pub fn validate(&self) -> Result<(), TomogramError> {
        let all_positive = [self.max_slope, self.max_step, self.min_clearance, self.radius]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive || self.max_slope >= std::f64::consts::FRAC_PI_2 {
            return Err(TomogramError::InvalidParameter(format!("robot spec out of range: {self:?}")));
        }
        Ok(())
    }
}

/// Relative weights of slope and step in the traversability cost.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostWeights {
    pub slope: f64,
    pub step: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { slope: 0.5, step: 0.5 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), TomogramError> {
        if self.slope < 0.0 || self.step < 0.0 || ((self.slope + self.step) - 1.0).abs() > 1e-9 {
            return Err(TomogramError::InvalidParameter(format!(
                "cost weights must be non-negative and sum to 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// A cell in a specific slice. Orders lexicographically by `(slice, i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub slice: usize,
    pub i: usize,
    pub j: usize,
}

impl CellId {
    pub fn new(slice: usize, i: usize, j: usize) -> Self {
        Self { slice, i, j }
    }
}

/// Per-cell planes of one slice, row-major with `i` (x) fastest.
///
/// Unknown ground is NaN, missing ceiling is `+inf`, blocked cost is `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct TomogramSlice {
    pub base: f64,
    pub ground: Vec<f32>,
    pub ceiling: Vec<f32>,
    pub cost: Vec<f32>,
}

pub const BLOCKED: f32 = f32::INFINITY;

#[derive(Debug, Clone, PartialEq)]
pub struct Tomogram {
    /// World `(x, y)` of the lower corner of cell (0, 0) and the base height of slice 0.
    pub origin: Point3<f64>,
    pub cell_size: f64,
    pub slice_interval: f64,
    pub nx: usize,
    pub ny: usize,
    pub slices: Vec<TomogramSlice>,
}

impl Tomogram {
    /// Single flat slice with every cell free at cost 0.
    pub fn flat(nx: usize, ny: usize, cell_size: f64, ground: f32) -> Self {
        let n = nx * ny;
        let slice = TomogramSlice {
            base: ground as f64,
            ground: vec![ground; n],
            ceiling: vec![f32::INFINITY; n],
            cost: vec![0.0; n],
        };
        Self {
            origin: Point3::new(0.0, 0.0, ground as f64),
            cell_size,
            slice_interval: 1.0,
            nx,
            ny,
            slices: vec![slice],
        }
    }

    /// Overwrite the cost of a cell; `None` marks it blocked.
    pub fn set_cost(&mut self, c: CellId, cost: Option<f32>) {
        let idx = self.index(c.i, c.j);
        self.slices[c.slice].cost[idx] = cost.unwrap_or(BLOCKED);
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn contains(&self, cell: CellId) -> bool {
        cell.slice < self.slices.len() && cell.i < self.nx && cell.j < self.ny
    }

    /// World XY of a cell centre.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.x + (i as f64 + 0.5) * self.cell_size,
            self.origin.y + (j as f64 + 0.5) * self.cell_size,
        )
    }

    /// Grid indices containing world `(x, y)`.
    pub fn cell_of_xy(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fi = ((x - self.origin.x) / self.cell_size).floor();
        let fj = ((y - self.origin.y) / self.cell_size).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn ground(&self, c: CellId) -> Option<f64> {
        let g = self.slices[c.slice].ground[self.index(c.i, c.j)];
        (!g.is_nan()).then_some(g as f64)
    }

    pub fn ceiling(&self, c: CellId) -> f64 {
        self.slices[c.slice].ceiling[self.index(c.i, c.j)] as f64
    }

    /// Traversability cost, `None` when blocked.
    pub fn cost(&self, c: CellId) -> Option<f64> {
        let v = self.slices[c.slice].cost[self.index(c.i, c.j)];
        (v != BLOCKED).then_some(v as f64)
    }

    pub fn is_free(&self, c: CellId) -> bool {
        self.contains(c) && self.cost(c).is_some()
    }

    /// World position of a cell: centre XY at ground height.
    pub fn world_pos(&self, c: CellId) -> Point3<f64> {
        let (x, y) = self.cell_center(c.i, c.j);
        Point3::new(x, y, self.ground(c).unwrap_or(f64::NAN))
    }

    /// Free cell under `(x, y)` whose ground is closest to `z`.
    pub fn locate(&self, p: &Point3<f64>) -> Option<CellId> {
        let (i, j) = self.cell_of_xy(p.x, p.y)?;
        (0..self.slices.len())
            .map(|s| CellId::new(s, i, j))
            .filter(|&c| self.is_free(c))
            .min_by(|&a, &b| {
                let da = (self.ground(a).unwrap() - p.z).abs();
                let db = (self.ground(b).unwrap() - p.z).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            })
    }

    pub fn neighbors8(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        const OFFS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        OFFS.iter().filter_map(move |&(di, dj)| {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            (ni >= 0 && nj >= 0 && (ni as usize) < self.nx && (nj as usize) < self.ny)
                .then_some((ni as usize, nj as usize))
        })
    }
}

/// Number of slices needed to cover `[z_min, z_max]`.
pub fn slice_count(z_min: f64, z_max: f64, interval: f64) -> usize {
    ((z_max - z_min) / interval).ceil() as usize + 1
}

/// Build the elevation layers of a tomogram. Costs are initialised to 0 for
/// cells with known ground and blocked otherwise; call
/// [`score_traversability`] to fill them.
pub fn build_tomogram(
    cloud: &PointCloud,
    cell_size: f64,
    slice_interval: f64,
    robot: &RobotSpec,
) -> Result<Tomogram, TomogramError> {
    if !(cell_size > 0.0 && slice_interval > 0.0) {
        return Err(TomogramError::InvalidParameter(format!(
            "cell_size ({cell_size}) and slice_interval ({slice_interval}) must be positive"
        )));
    }
    robot.validate()?;
    let (lo, hi) = cloud.bounds().ok_or(TomogramError::EmptyCloud)?;
    if hi.x == lo.x && hi.y == lo.y {
        return Err(TomogramError::DegenerateExtent);
    }
    let nx = ((hi.x - lo.x) / cell_size).floor() as usize + 1;
    let ny = ((hi.y - lo.y) / cell_size).floor() as usize + 1;
    let origin = Point3::new(lo.x, lo.y, lo.z);

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); nx * ny];
    for p in cloud.points() {
        let i = (((p.x - lo.x) / cell_size).floor() as usize).min(nx - 1);
        let j = (((p.y - lo.y) / cell_size).floor() as usize).min(ny - 1);
        columns[j * nx + i].push(p.z);
    }
    for col in &mut columns {
        col.sort_by(f64::total_cmp);
    }

    let n_slices = slice_count(lo.z, hi.z, slice_interval);
    let eps = robot.max_step;
    let slices = (0..n_slices)
        .into_par_iter()
        .map(|k| {
            let base = lo.z + k as f64 * slice_interval;
            let mut ground = vec![f32::NAN; nx * ny];
            let mut ceiling = vec![f32::INFINITY; nx * ny];
            let mut cost = vec![BLOCKED; nx * ny];
            for (idx, col) in columns.iter().enumerate() {
                let below = col.partition_point(|&z| z <= base + SLICE_EPS);
                if below == 0 {
                    continue;
                }
                let g = col[below - 1];
                ground[idx] = g as f32;
                let above = col.partition_point(|&z| z <= g + eps);
                if above < col.len() {
                    ceiling[idx] = col[above] as f32;
                }
                cost[idx] = 0.0;
            }
            TomogramSlice { base, ground, ceiling, cost }
        })
        .collect();

    Ok(Tomogram { origin, cell_size, slice_interval, nx, ny, slices })
}

/// Least-squares slope angle of the ground plane over the 3x3 neighbourhood,
/// or `None` when fewer than three non-collinear heights are known.
fn fitted_slope(tomo: &Tomogram, slice: &TomogramSlice, i: usize, j: usize) -> Option<f64> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    let mut n = 0;
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni as usize >= tomo.nx || nj as usize >= tomo.ny {
                continue;
            }
            let g = slice.ground[tomo.index(ni as usize, nj as usize)];
            if g.is_nan() {
                continue;
            }
            let row = Vector3::new(di as f64 * tomo.cell_size, dj as f64 * tomo.cell_size, 1.0);
            ata += row * row.transpose();
            atb += row * g as f64;
            n += 1;
        }
    }
    if n < 3 {
        return None;
    }
    let sol = ata.lu().solve(&atb)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(sol.x.hypot(sol.y).atan())
}

/// Score every slice; per-slice work is independent and deterministic.
pub fn score_traversability(
    tomo: &Tomogram,
    robot: &RobotSpec,
    weights: &CostWeights,
) -> Result<Tomogram, TomogramError> {
    robot.validate()?;
    weights.validate()?;
    let mut out = tomo.clone();
    let radius_cells = (robot.radius / tomo.cell_size).ceil() as i64;
    out.slices.par_iter_mut().for_each(|slice| {
        let mut cost = vec![BLOCKED; tomo.num_cells()];
        for j in 0..tomo.ny {
            for i in 0..tomo.nx {
                let idx = tomo.index(i, j);
                let g = slice.ground[idx];
                if g.is_nan() {
                    continue;
                }
                let g = g as f64;
                if (slice.ceiling[idx] as f64 - g) < robot.min_clearance {
                    continue;
                }
                let step = tomo
                    .neighbors8(i, j)
                    .map(|(ni, nj)| slice.ground[tomo.index(ni, nj)])
                    .filter(|v| !v.is_nan())
                    .map(|v| (v as f64 - g).abs())
                    .fold(0.0, f64::max);
                if step > robot.max_step {
                    continue;
                }
                let Some(slope) = fitted_slope(tomo, slice, i, j) else { continue };
                if slope > robot.max_slope {
                    continue;
                }
                let c = weights.slope * slope / robot.max_slope + weights.step * step / robot.max_step;
                cost[idx] = c.clamp(0.0, 1.0) as f32;
            }
        }
        slice.cost = dilate_blocked(tomo, &cost, radius_cells);
    });
    Ok(out)
}

/// Block every cell within `r` cells (Euclidean) of a blocked cell.
fn dilate_blocked(tomo: &Tomogram, cost: &[f32], r: i64) -> Vec<f32> {
    let mut out = cost.to_vec();
    if r <= 0 {
        return out;
    }
    let disk: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dj| (-r..=r).map(move |di| (di, dj)))
        .filter(|&(di, dj)| di * di + dj * dj <= r * r)
        .collect();
    for j in 0..tomo.ny {
        for i in 0..tomo.nx {
            if cost[tomo.index(i, j)] != BLOCKED {
                continue;
            }
            for &(di, dj) in &disk {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni >= 0 && nj >= 0 && (ni as usize) < tomo.nx && (nj as usize) < tomo.ny {
                    out[tomo.index(ni as usize, nj as usize)] = BLOCKED;
                }
            }
        }
    }
    out
}

/// All non-blocked cells, in `(slice, i, j)` order.
pub fn free_cells(tomo: &Tomogram) -> Vec<CellId> {
    let mut out = Vec::new();
    for (s, slice) in tomo.slices.iter().enumerate() {
        for i in 0..tomo.nx {
            for j in 0..tomo.ny {
                if slice.cost[tomo.index(i, j)] != BLOCKED {
                    out.push(CellId::new(s, i, j));
                }
            }
        }
    }
    out
}

/// Free cells with at least one blocked in-grid 8-neighbour, in `(slice, i, j)` order.
pub fn obstacle_adjacent_cells(tomo: &Tomogram) -> Vec<CellId> {
    free_cells(tomo)
        .into_iter()
        .filter(|c| {
            let slice = &tomo.slices[c.slice];
            tomo.neighbors8(c.i, c.j).any(|(ni, nj)| slice.cost[tomo.index(ni, nj)] == BLOCKED)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Binary dump
// ---------------------------------------------------------------------------

pub fn write_tomogram<W: Write>(tomo: &Tomogram, mut w: W) -> Result<(), TomogramError> {
    w.write_all(TOMOGRAM_MAGIC)?;
    for v in [tomo.origin.x, tomo.origin.y, tomo.origin.z, tomo.cell_size, tomo.slice_interval] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in [tomo.nx, tomo.ny, tomo.slices.len()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(tomo.num_cells() * 12);
    for s in &tomo.slices {
        buf.clear();
        for plane in [&s.ground, &s.ceiling, &s.cost] {
            for v in plane.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_tomogram<R: Read>(mut r: R) -> Result<Tomogram, TomogramError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 56 || &bytes[..4] != TOMOGRAM_MAGIC {
        return Err(TomogramError::Format("missing TGTM magic or short header".into()));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let origin = Point3::new(f(4), f(12), f(20));
    let (cell_size, slice_interval) = (f(28), f(36));
    let (nx, ny, ns) = (u(44), u(48), u(52));
    let n = nx * ny;
    let expected = 56 + ns * n * 12;
    if bytes.len() != expected {
        return Err(TomogramError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let plane = |off: usize| -> Vec<f32> {
        bytes[off..off + 4 * n].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect()
    };
    let slices = (0..ns)
        .map(|k| {
            let off = 56 + k * n * 12;
            TomogramSlice {
                base: origin.z + k as f64 * slice_interval,
                ground: plane(off),
                ceiling: plane(off + 4 * n),
                cost: plane(off + 8 * n),
            }
        })
        .collect();
    Ok(Tomogram { origin, cell_size, slice_interval, nx, ny, slices })
}

pub fn save_tomogram(tomo: &Tomogram, path: &Path) -> Result<(), TomogramError> {
    let mut buf = Vec::new();
    write_tomogram(tomo, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_tomogram(path: &Path) -> Result<Tomogram, TomogramError> {
    read_tomogram(fs::File::open(path)?)
}
