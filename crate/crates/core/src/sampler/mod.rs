//! Coverage-oriented sparse trajectory sampling.
//!
//! Cells are drawn half from free space and half next to obstacles, reduced
//! to `K` representatives by k-means, dealt into `S` subgroups, ordered by an
//! open-path TSP over planner distances and stitched together with smoothed
//! A* paths.

mod kmeans;
mod tsp;

use std::fmt::Write as _;

use nalgebra::Point3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use kmeans::{kmeans_points, KMeansResult};
pub use tsp::{path_cost, solve_tsp, two_opt_pass, IMPROVE_EPS};

use crate::planner::{astar, distance_matrix, smooth_path, PlannerConfig};
use crate::tomogram::{free_cells, obstacle_adjacent_cells, CellId, Tomogram};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("tomogram has no free cells")]
    EmptyFreeSet,
    #[error("{k} clusters requested from {available} distinct cells")]
    TooFewCells { k: usize, available: usize },
    #[error("{groups} subgroups requested from {available} representatives")]
    TooManyGroups { groups: usize, available: usize },
    #[error("node set is empty")]
    EmptyNodes,
    #[error("all representatives are mutually unreachable")]
    AllUnreachable,
    #[error("malformed sparse trajectory file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    /// Total number of sampled cells (even).
    pub n: usize,
    /// Number of k-means representatives.
    pub k: usize,
    /// Number of trajectories.
    pub s: usize,
    pub seed: u64,
    pub planner: PlannerConfig,
}

impl SamplerConfig {
    pub fn new(n: usize, k: usize, s: usize, seed: u64) -> Self {
        Self { n, k, s, seed, planner: PlannerConfig::default() }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.n >= self.k && self.k >= self.s && self.s >= 1) {
            return Err(SamplerError::InvalidConfig(format!(
                "need n >= K >= S >= 1, got n={} K={} S={}",
                self.n, self.k, self.s
            )));
        }
        if !self.n.is_multiple_of(2) {
            return Err(SamplerError::InvalidConfig(format!("n must be even, got {}", self.n)));
        }
        if !(self.planner.cost_weight >= 0.0) || !(self.planner.max_step > 0.0) {
            return Err(SamplerError::InvalidConfig("planner weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseTrajectory {
    pub id: usize,
    /// Representatives in visiting order.
    pub nodes: Vec<CellId>,
    /// Every cell of the stitched, smoothed path.
    pub waypoints: Vec<CellId>,
    /// World positions of `waypoints`.
    pub points: Vec<Point3<f64>>,
    pub total_length: f64,
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct SubgroupReport {
    pub trajectory: usize,
    pub assigned: usize,
    pub kept: usize,
    /// Representatives outside the largest connected component.
    pub dropped: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingResult {
    pub trajectories: Vec<SparseTrajectory>,
    pub reports: Vec<SubgroupReport>,
    /// Representatives actually used by k-means (may be below `K` when few
    /// distinct cells were drawn).
    pub representatives: Vec<CellId>,
}

fn draw<R: Rng + ?Sized>(pool: &[CellId], count: usize, rng: &mut R) -> Vec<CellId> {
    if count <= pool.len() {
        rand::seq::index::sample(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect()
    } else {
        log::warn!("{count} samples requested from {} cells; drawing with replacement", pool.len());
        (0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

/// Uniform sample of free cells, without replacement while possible.
pub fn sample_free_space<R: Rng + ?Sized>(
    tomo: &Tomogram,
    count: usize,
    rng: &mut R,
) -> Result<Vec<CellId>, SamplerError> {
    let pool = free_cells(tomo);
    if pool.is_empty() {
        return Err(SamplerError::EmptyFreeSet);
    }
    Ok(draw(&pool, count, rng))
}

/// Uniform sample of obstacle-adjacent cells; falls back to free space when
/// there are none.
pub fn sample_near_obstacles<R: Rng + ?Sized>(
    tomo: &Tomogram,
    count: usize,
    rng: &mut R,
) -> Result<Vec<CellId>, SamplerError> {
    let pool = obstacle_adjacent_cells(tomo);
    if pool.is_empty() {
        log::warn!("no obstacle-adjacent cells; sampling free space instead");
        return sample_free_space(tomo, count, rng);
    }
    Ok(draw(&pool, count, rng))
}

/// `k` representative cells of `cells` (duplicates are ignored), clustered
/// on world coordinates. Each representative is the member nearest its centroid.
pub fn kmeans<R: Rng + ?Sized>(
    tomo: &Tomogram,
    cells: &[CellId],
    k: usize,
    rng: &mut R,
) -> Result<Vec<CellId>, SamplerError> {
    let mut uniq = cells.to_vec();
    uniq.sort();
    uniq.dedup();
    let pts: Vec<Point3<f64>> = uniq.iter().map(|&c| tomo.world_pos(c)).collect();
    let r = kmeans_points(&pts, k, rng)?;
    Ok(r.representatives.into_iter().map(|i| uniq[i]).collect())
}

/// Random partition into `s` groups whose sizes differ by at most one.
pub fn assign_subgroups<T: Clone, R: Rng + ?Sized>(
    reps: &[T],
    s: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>, SamplerError> {
    if s == 0 || s > reps.len() {
        return Err(SamplerError::TooManyGroups { groups: s, available: reps.len() });
    }
    let mut shuffled = reps.to_vec();
    shuffled.shuffle(rng);
    let mut groups = vec![Vec::with_capacity(reps.len() / s + 1); s];
    for (k, r) in shuffled.into_iter().enumerate() {
        groups[k % s].push(r);
    }
    Ok(groups)
}

/// Indices of the largest connected component of the finite-edge graph
/// (ties go to the component holding the smallest index).
pub fn largest_component(d: &[Vec<Option<f64>>]) -> Vec<usize> {
    let n = d.len();
    let mut comp = vec![usize::MAX; n];
    let mut best: Vec<usize> = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut members = vec![s];
        comp[s] = s;
        let mut k = 0;
        while k < members.len() {
            let u = members[k];
            for v in 0..n {
                if comp[v] == usize::MAX && d[u][v].is_some() {
                    comp[v] = s;
                    members.push(v);
                }
            }
            k += 1;
        }
        if members.len() > best.len() {
            members.sort();
            best = members;
        }
    }
    best
}

fn stitch(tomo: &Tomogram, id: usize, nodes: Vec<CellId>, cfg: &PlannerConfig) -> SparseTrajectory {
    let mut waypoints = vec![nodes[0]];
    let mut total_length = 0.0;
    for w in nodes.windows(2) {
        let p = astar(tomo, w[0], w[1], cfg).expect("nodes share a connected component");
        let p = smooth_path(&p, tomo, cfg);
        total_length += p.length;
        waypoints.extend_from_slice(&p.cells[1..]);
    }
    let points = waypoints.iter().map(|&c| tomo.world_pos(c)).collect();
    SparseTrajectory { id, nodes, waypoints, points, total_length }
}

/// Full sampling pipeline. Output holds exactly `cfg.s` trajectories.
pub fn sample_sparse_trajectories(tomo: &Tomogram, cfg: &SamplerConfig) -> Result<SamplingResult, SamplerError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cells = sample_free_space(tomo, cfg.n / 2, &mut rng)?;
    cells.extend(sample_near_obstacles(tomo, cfg.n / 2, &mut rng)?);
    let distinct = {
        let mut u = cells.clone();
        u.sort();
        u.dedup();
        u.len()
    };
    if distinct < cfg.s {
        return Err(SamplerError::TooFewCells { k: cfg.s, available: distinct });
    }
    let k = if distinct < cfg.k {
        log::warn!("only {distinct} distinct cells sampled; reducing K from {} to {distinct}", cfg.k);
        distinct
    } else {
        cfg.k
    };
    let reps = kmeans(tomo, &cells, k, &mut rng)?;
    let groups = assign_subgroups(&reps, cfg.s, &mut rng)?;

    let out: Vec<(SparseTrajectory, SubgroupReport)> = groups
        .into_par_iter()
        .enumerate()
        .map(|(id, group)| {
            let dm = distance_matrix(tomo, &group, &cfg.planner);
            let keep = largest_component(&dm);
            let dropped: Vec<_> = (0..group.len())
                .filter(|i| keep.binary_search(i).is_err())
                .map(|i| (group[i].slice, group[i].i, group[i].j))
                .collect();
            if !dropped.is_empty() {
                log::warn!("trajectory {id}: dropping {} unreachable representatives", dropped.len());
            }
            let sub: Vec<Vec<f64>> = keep.iter().map(|&a| keep.iter().map(|&b| dm[a][b].unwrap()).collect()).collect();
            let order = solve_tsp(&sub).expect("component is non-empty");
            let nodes: Vec<CellId> = order.iter().map(|&o| group[keep[o]]).collect();
            let report = SubgroupReport { trajectory: id, assigned: group.len(), kept: keep.len(), dropped };
            (stitch(tomo, id, nodes, &cfg.planner), report)
        })
        .collect();

    if out.iter().all(|(_, r)| r.kept == 1) && out.iter().any(|(_, r)| r.assigned > 1) {
        return Err(SamplerError::AllUnreachable);
    }
    let (trajectories, reports) = out.into_iter().unzip();
    Ok(SamplingResult { trajectories, reports, representatives: reps })
}

/// Fraction of free cells lying within `radius` (3D) of a trajectory waypoint.
pub fn coverage(tomo: &Tomogram, trajs: &[SparseTrajectory], radius: f64) -> f64 {
    let free = free_cells(tomo);
    if free.is_empty() {
        return 0.0;
    }
    let key = |p: &Point3<f64>| -> (i64, i64, i64) {
        ((p.x / radius).floor() as i64, (p.y / radius).floor() as i64, (p.z / radius).floor() as i64)
    };
    let mut buckets: std::collections::HashMap<(i64, i64, i64), Vec<Point3<f64>>> = Default::default();
    for p in trajs.iter().flat_map(|t| &t.points) {
        buckets.entry(key(p)).or_default().push(*p);
    }
    let r2 = radius * radius;
    let covered = free
        .par_iter()
        .filter(|&&c| {
            let p = tomo.world_pos(c);
            let (kx, ky, kz) = key(&p);
            (-1..=1).any(|dx| {
                (-1..=1).any(|dy| {
                    (-1..=1).any(|dz| {
                        buckets
                            .get(&(kx + dx, ky + dy, kz + dz))
                            .is_some_and(|v| v.iter().any(|q| (q - p).norm_squared() <= r2))
                    })
                })
            })
        })
        .count();
    covered as f64 / free.len() as f64
}

/// Text form, one waypoint per line: `traj_id x y z slice`.
pub fn format_sparse_trajectories(trajs: &[SparseTrajectory]) -> String {
    let mut out = String::from("# traj_id x y z slice\n");
    for t in trajs {
        for (c, p) in t.waypoints.iter().zip(&t.points) {
            let _ = writeln!(out, "{} {} {} {} {}", t.id, p.x, p.y, p.z, c.slice);
        }
    }
    out
}

/// A parsed waypoint line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointRecord {
    pub traj_id: usize,
    pub position: Point3<f64>,
    pub slice: usize,
}

pub fn parse_sparse_trajectories(text: &str) -> Result<Vec<WaypointRecord>, SamplerError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| SamplerError::Parse { line: n + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let traj_id = f[0].parse().map_err(|e| err(format!("traj_id: {e}")))?;
        let slice = f[4].parse().map_err(|e| err(format!("slice: {e}")))?;
        let mut xyz = [0.0f64; 3];
        for k in 0..3 {
            xyz[k] = f[k + 1].parse().map_err(|e| err(format!("coordinate: {e}")))?;
            if !xyz[k].is_finite() {
                return Err(err("non-finite coordinate".into()));
            }
        }
        out.push(WaypointRecord { traj_id, position: Point3::from(xyz), slice });
    }
    Ok(out)
}

/// Group parsed waypoints into per-trajectory polylines, ordered by id.
pub fn group_waypoints(records: &[WaypointRecord]) -> Vec<(usize, Vec<Point3<f64>>)> {
    let mut map: std::collections::BTreeMap<usize, Vec<Point3<f64>>> = Default::default();
    for r in records {
        map.entry(r.traj_id).or_default().push(r.position);
    }
    map.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(n: usize) -> Tomogram {
        let mut t = Tomogram::flat(n, n, 0.2, 0.0);
        for k in 0..n {
            for c in [(k, 0), (k, n - 1), (0, k), (n - 1, k)] {
                t.set_cost(CellId::new(0, c.0, c.1), None);
            }
        }
        t
    }

    #[test]
    fn sample_counts() {
        let t = room(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_free_space(&t, 0, &mut rng).unwrap().is_empty());
        let free = free_cells(&t);
        let mut s = sample_free_space(&t, free.len(), &mut rng).unwrap();
        s.sort();
        assert_eq!(s, free);
        let mut s = sample_near_obstacles(&t, obstacle_adjacent_cells(&t).len(), &mut rng).unwrap();
        s.sort();
        assert_eq!(s, obstacle_adjacent_cells(&t));
    }

    #[test]
    fn empty_free_set() {
        let mut t = Tomogram::flat(2, 2, 1.0, 0.0);
        for c in free_cells(&t) {
            t.set_cost(c, None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_free_space(&t, 1, &mut rng), Err(SamplerError::EmptyFreeSet));
        assert_eq!(sample_near_obstacles(&t, 1, &mut rng), Err(SamplerError::EmptyFreeSet));
    }

    #[test]
    fn no_obstacles_falls_back() {
        let t = Tomogram::flat(5, 5, 1.0, 0.0);
        let s = sample_near_obstacles(&t, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn subgroup_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = assign_subgroups(&(0..10).collect::<Vec<_>>(), 3, &mut rng).unwrap();
        let mut sizes: Vec<_> = g.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert_eq!(assign_subgroups(&[1, 2], 1, &mut rng).unwrap()[0].len(), 2);
        assert!(assign_subgroups(&[1, 2], 3, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::new(10, 4, 2, 0).validate().is_ok());
        assert!(SamplerConfig::new(11, 4, 2, 0).validate().is_err());
        assert!(SamplerConfig::new(10, 4, 5, 0).validate().is_err());
        assert!(SamplerConfig::new(10, 4, 0, 0).validate().is_err());
    }

    #[test]
    fn corridor_single_trajectory() {
        let mut t = Tomogram::flat(40, 3, 0.25, 0.0);
        for i in 0..40 {
            t.set_cost(CellId::new(0, i, 0), None);
            t.set_cost(CellId::new(0, i, 2), None);
        }
        let r = sample_sparse_trajectories(&t, &SamplerConfig::new(80, 2, 1, 3)).unwrap();
        assert_eq!(r.trajectories.len(), 1);
        let tr = &r.trajectories[0];
        let xs: Vec<f64> = tr.points.iter().map(|p| p.x).collect();
        let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(span > 4.0, "span {span}");
    }

    #[test]
    fn text_round_trip() {
        let t = room(12);
        let r = sample_sparse_trajectories(&t, &SamplerConfig::new(60, 6, 2, 1)).unwrap();
        let recs = parse_sparse_trajectories(&format_sparse_trajectories(&r.trajectories)).unwrap();
        let grouped = group_waypoints(&recs);
        assert_eq!(grouped.len(), 2);
        for (tr, (id, pts)) in r.trajectories.iter().zip(&grouped) {
            assert_eq!(tr.id, *id);
            assert_eq!(&tr.points, pts);
        }
    }
}
