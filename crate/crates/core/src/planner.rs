//! A* search over tomogram cells, path distances and shortcut smoothing.
//!
//! Moves are 8-connected within a slice (diagonals may not cut blocked
//! corners) plus vertical transitions to the adjacent slice at the same
//! `(i, j)` when both cells are free and their grounds differ by at most
//! `max_step`. Step length is the 3D distance between cell positions.
//!
//! Edge costs are `len * (1 + lambda * mean(cost_u, cost_v))`, rounded up to
//! integer micrometre units so that path costs add exactly and are
//! independent of summation order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;

pub use crate::tomogram::CellId;
use crate::tomogram::Tomogram;

/// Integer cost units per meter.
pub const COST_UNITS_PER_METER: f64 = 1e6;

const SMOOTH_WINDOW: usize = 256;
const SMOOTH_MAX_PASSES: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("endpoint {0:?} is blocked or outside the tomogram")]
    BlockedEndpoint(CellId),
    #[error("no path from {start:?} to {goal:?}")]
    NoPath { start: CellId, goal: CellId },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlannerConfig {
    /// Weight of traversability cost relative to distance (lambda >= 0).
    pub cost_weight: f64,
    /// Largest ground difference crossed by a single move.
    pub max_step: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { cost_weight: 1.0, max_step: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<CellId>,
    /// Sum of 3D step lengths, meters.
    pub length: f64,
    /// Optimised objective in [`COST_UNITS_PER_METER`] units.
    pub cost_units: u64,
}

impl Path {
    pub fn cost(&self) -> f64 {
        self.cost_units as f64 / COST_UNITS_PER_METER
    }
}

fn flat_index(t: &Tomogram, c: CellId) -> usize {
    (c.slice * t.ny + c.j) * t.nx + c.i
}

fn from_flat(t: &Tomogram, idx: usize) -> CellId {
    let i = idx % t.nx;
    let j = (idx / t.nx) % t.ny;
    CellId::new(idx / (t.nx * t.ny), i, j)
}

pub fn step_length(t: &Tomogram, a: CellId, b: CellId) -> f64 {
    (t.world_pos(a) - t.world_pos(b)).norm()
}

fn edge_units(t: &Tomogram, a: CellId, b: CellId, len: f64, lambda: f64) -> u64 {
    let mean_cost = 0.5 * (t.cost(a).unwrap_or(0.0) + t.cost(b).unwrap_or(0.0));
    (len * (1.0 + lambda * mean_cost) * COST_UNITS_PER_METER).ceil() as u64
}

/// Whether a single move from `a` to `b` is legal.
pub fn is_valid_move(t: &Tomogram, a: CellId, b: CellId, max_step: f64) -> bool {
    if !t.is_free(a) || !t.is_free(b) {
        return false;
    }
    let dz = (t.ground(a).unwrap() - t.ground(b).unwrap()).abs();
    if dz > max_step {
        return false;
    }
    let di = a.i.abs_diff(b.i);
    let dj = a.j.abs_diff(b.j);
    if a.slice == b.slice {
        match (di, dj) {
            (1, 0) | (0, 1) => true,
            (1, 1) => {
                t.is_free(CellId::new(a.slice, b.i, a.j)) && t.is_free(CellId::new(a.slice, a.i, b.j))
            }
            _ => false,
        }
    } else {
        a.slice.abs_diff(b.slice) == 1 && di == 0 && dj == 0
    }
}

/// Legal successors of `c` with their step lengths.
pub fn successors(t: &Tomogram, c: CellId, max_step: f64) -> Vec<(CellId, f64)> {
    let mut out = Vec::with_capacity(10);
    for (ni, nj) in t.neighbors8(c.i, c.j) {
        let n = CellId::new(c.slice, ni, nj);
        if is_valid_move(t, c, n, max_step) {
            out.push((n, step_length(t, c, n)));
        }
    }
    for s in [c.slice.wrapping_sub(1), c.slice + 1] {
        if s < t.slices.len() {
            let n = CellId::new(s, c.i, c.j);
            if is_valid_move(t, c, n, max_step) {
                out.push((n, step_length(t, c, n)));
            }
        }
    }
    out
}

/// Minimum-cost path from `start` to `goal`.
///
/// The heuristic is the 3D Euclidean distance (admissible since every edge
/// costs at least its length). Open-set ties resolve by `(f, slice, i, j)`.
pub fn astar(t: &Tomogram, start: CellId, goal: CellId, cfg: &PlannerConfig) -> Result<Path, PlanError> {
    for c in [start, goal] {
        if !t.is_free(c) {
            return Err(PlanError::BlockedEndpoint(c));
        }
    }
    let goal_pos = t.world_pos(goal);
    let h = |c: CellId| -> u64 {
        let d = (t.world_pos(c) - goal_pos).norm() * COST_UNITS_PER_METER;
        (d.floor() as u64).saturating_sub(1)
    };
    let n = t.slices.len() * t.num_cells();
    let mut g = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut open = BinaryHeap::new();
    let si = flat_index(t, start);
    g[si] = 0;
    open.push(Reverse((h(start), start)));
    while let Some(Reverse((f, c))) = open.pop() {
        let ci = flat_index(t, c);
        if f != g[ci] + h(c) {
            continue;
        }
        if c == goal {
            break;
        }
        for (nb, len) in successors(t, c, cfg.max_step) {
            let ni = flat_index(t, nb);
            let cand = g[ci] + edge_units(t, c, nb, len, cfg.cost_weight);
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = ci;
                open.push(Reverse((cand + h(nb), nb)));
            }
        }
    }
    let gi = flat_index(t, goal);
    if g[gi] == u64::MAX {
        return Err(PlanError::NoPath { start, goal });
    }
    let mut cells = vec![goal];
    let mut cur = gi;
    while cur != si {
        cur = parent[cur];
        cells.push(from_flat(t, cur));
    }
    cells.reverse();
    let length = path_length(t, &cells);
    Ok(Path { cells, length, cost_units: g[gi] })
}

/// Sum of 3D step lengths along `cells`.
pub fn path_length(t: &Tomogram, cells: &[CellId]) -> f64 {
    cells.windows(2).map(|w| step_length(t, w[0], w[1])).sum()
}

/// Length in meters of the optimal path between `a` and `b`.
///
/// The search always runs from the lexicographically smaller endpoint, so
/// `path_distance(a, b) == path_distance(b, a)` bit for bit.
pub fn path_distance(t: &Tomogram, a: CellId, b: CellId, cfg: &PlannerConfig) -> Result<f64, PlanError> {
    if a == b {
        return if t.is_free(a) { Ok(0.0) } else { Err(PlanError::BlockedEndpoint(a)) };
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    astar(t, lo, hi, cfg).map(|p| p.length)
}

/// Symmetric matrix of path distances; `None` marks unreachable pairs.
pub fn distance_matrix(t: &Tomogram, nodes: &[CellId], cfg: &PlannerConfig) -> Vec<Vec<Option<f64>>> {
    let n = nodes.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dists: Vec<Option<f64>> =
        pairs.par_iter().map(|&(i, j)| path_distance(t, nodes[i], nodes[j], cfg).ok()).collect();
    let mut m = vec![vec![Some(0.0); n]; n];
    for (&(i, j), d) in pairs.iter().zip(dists) {
        m[i][j] = d;
        m[j][i] = d;
    }
    m
}

/// Check that `path` is a chain of legal moves over free cells.
pub fn validate_path(t: &Tomogram, path: &Path, max_step: f64) -> bool {
    !path.cells.is_empty()
        && path.cells.iter().all(|&c| t.is_free(c))
        && path.cells.windows(2).all(|w| is_valid_move(t, w[0], w[1], max_step))
}

/// 8-connected raster line between two grid cells, endpoints included.
pub fn raster_line(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (x0, y0, x1, y1) = (a.0 as i64, a.1 as i64, b.0 as i64, b.1 as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x as usize, y as usize));
        if x == x1 && y == y1 {
            return out;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn line_of_sight(t: &Tomogram, a: CellId, b: CellId, max_step: f64) -> Option<Vec<CellId>> {
    let cells: Vec<CellId> =
        raster_line((a.i, a.j), (b.i, b.j)).into_iter().map(|(i, j)| CellId::new(a.slice, i, j)).collect();
    cells.windows(2).all(|w| is_valid_move(t, w[0], w[1], max_step)).then_some(cells)
}

/// Shortcut smoothing: from each anchor, jump to the farthest later cell in
/// the same slice reachable by a free straight raster line that is no longer
/// than the sub-path it replaces. Repeats until the path stops changing.
pub fn smooth_path(path: &Path, t: &Tomogram, cfg: &PlannerConfig) -> Path {
    let mut cells = path.cells.clone();
    for _ in 0..SMOOTH_MAX_PASSES {
        let n = cells.len();
        if n < 3 {
            break;
        }
        let mut prefix = Vec::with_capacity(n);
        prefix.push(0.0);
        for w in cells.windows(2) {
            prefix.push(prefix.last().unwrap() + step_length(t, w[0], w[1]));
        }
        let mut out = vec![cells[0]];
        let mut a = 0;
        while a + 1 < n {
            let mut jumped = false;
            for b in (a + 2..=(a + SMOOTH_WINDOW).min(n - 1)).rev() {
                if cells[b].slice != cells[a].slice {
                    continue;
                }
                if let Some(line) = line_of_sight(t, cells[a], cells[b], cfg.max_step) {
                    if path_length(t, &line) <= prefix[b] - prefix[a] + 1e-12 {
                        out.extend_from_slice(&line[1..]);
                        a = b;
                        jumped = true;
                        break;
                    }
                }
            }
            if !jumped {
                out.push(cells[a + 1]);
                a += 1;
            }
        }
        if out == cells {
            break;
        }
        cells = out;
    }
    let cost_units = cells
        .windows(2)
        .map(|w| edge_units(t, w[0], w[1], step_length(t, w[0], w[1]), cfg.cost_weight))
        .sum();
    let length = path_length(t, &cells);
    Path { cells, length, cost_units }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg0() -> PlannerConfig {
        PlannerConfig { cost_weight: 0.0, max_step: 0.25 }
    }

    #[test]
    fn straight_corridor_close_to_euclidean() {
        let mut t = Tomogram::flat(30, 5, 0.2, 0.0);
        for i in 0..30 {
            t.set_cost(CellId::new(0, i, 0), None);
            t.set_cost(CellId::new(0, i, 4), None);
        }
        let (a, b) = (CellId::new(0, 0, 2), CellId::new(0, 29, 2));
        let p = astar(&t, a, b, &cfg0()).unwrap();
        let euclid = (t.world_pos(a) - t.world_pos(b)).norm();
        assert!(p.length <= euclid + 0.2 * 2f64.sqrt());
        assert!(validate_path(&t, &p, 0.25));
    }

    #[test]
    fn goal_inside_walled_room_has_no_path() {
        let mut t = Tomogram::flat(20, 20, 0.2, 0.0);
        for k in 8..=12 {
            for c in [(k, 8), (k, 12), (8, k), (12, k)] {
                t.set_cost(CellId::new(0, c.0, c.1), None);
            }
        }
        let r = astar(&t, CellId::new(0, 1, 1), CellId::new(0, 10, 10), &cfg0());
        assert!(matches!(r, Err(PlanError::NoPath { .. })));
        let r = astar(&t, CellId::new(0, 1, 1), CellId::new(0, 8, 8), &cfg0());
        assert!(matches!(r, Err(PlanError::BlockedEndpoint(_))));
    }

    #[test]
    fn same_endpoint_is_zero() {
        let t = Tomogram::flat(4, 4, 0.5, 0.0);
        let c = CellId::new(0, 2, 2);
        assert_eq!(path_distance(&t, c, c, &cfg0()).unwrap(), 0.0);
    }

    #[test]
    fn no_corner_cutting() {
        let mut t = Tomogram::flat(3, 3, 1.0, 0.0);
        t.set_cost(CellId::new(0, 1, 0), None);
        t.set_cost(CellId::new(0, 0, 1), None);
        assert!(!is_valid_move(&t, CellId::new(0, 0, 0), CellId::new(0, 1, 1), 1.0));
        assert!(astar(&t, CellId::new(0, 0, 0), CellId::new(0, 2, 2), &cfg0()).is_err());
    }

    #[test]
    fn vertical_transitions_need_matching_ground() {
        let mut t = Tomogram::flat(3, 1, 1.0, 0.0);
        let mut upper = t.slices[0].clone();
        upper.ground = vec![0.1, 0.1, 3.0];
        t.slices.push(upper);
        assert!(is_valid_move(&t, CellId::new(0, 0, 0), CellId::new(1, 0, 0), 0.25));
        assert!(!is_valid_move(&t, CellId::new(0, 2, 0), CellId::new(1, 2, 0), 0.25));
        assert!(!is_valid_move(&t, CellId::new(0, 0, 0), CellId::new(1, 1, 0), 0.25));
    }

    #[test]
    fn straight_path_unchanged_by_smoothing() {
        let t = Tomogram::flat(20, 20, 0.2, 0.0);
        let cells: Vec<_> = raster_line((1, 2), (17, 9)).into_iter().map(|(i, j)| CellId::new(0, i, j)).collect();
        let p = Path { length: path_length(&t, &cells), cells, cost_units: 0 };
        let s = smooth_path(&p, &t, &cfg0());
        assert_eq!(s.cells, p.cells);
    }

    #[test]
    fn l_shape_gets_shorter() {
        let t = Tomogram::flat(20, 20, 0.2, 0.0);
        let mut cells: Vec<_> = (2..=15).map(|i| CellId::new(0, i, 2)).collect();
        cells.extend((3..=15).map(|j| CellId::new(0, 15, j)));
        let p = Path { length: path_length(&t, &cells), cells, cost_units: 0 };
        let s = smooth_path(&p, &t, &cfg0());
        assert!(s.length < p.length - 1e-9);
        assert!(validate_path(&t, &s, 0.25));
        assert_eq!(s.cells.first(), p.cells.first());
        assert_eq!(s.cells.last(), p.cells.last());
    }

    #[test]
    fn raster_line_is_octile() {
        let l = raster_line((0, 0), (5, 2));
        assert_eq!(l.len(), 6);
        assert_eq!(l[0], (0, 0));
        assert_eq!(l[5], (5, 2));
        for w in l.windows(2) {
            assert!(w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1);
        }
    }
}
