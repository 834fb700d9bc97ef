use std::cmp::Reverse;
use std::collections::BinaryHeap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgf_core::planner::*;
use tgf_core::tomogram::free_cells;
use tgf_core::{CellId, Tomogram};

fn random_grid(rng: &mut ChaCha8Rng, n: usize, density: f64, bumpy: bool) -> Tomogram {
    let mut t = Tomogram::flat(n, n, 0.5, 0.0);
    for j in 0..n {
        for i in 0..n {
            let idx = t.index(i, j);
            if bumpy {
                t.slices[0].ground[idx] = rng.random_range(0.0..0.4);
            }
            t.slices[0].cost[idx] = rng.random_range(0.0..1.0);
            if rng.random_bool(density) {
                t.set_cost(CellId::new(0, i, j), None);
            }
        }
    }
    t
}

/// Plain Dijkstra over an explicitly enumerated single-slice grid graph.
fn dijkstra(t: &Tomogram, start: CellId, goal: CellId, lambda: f64, max_step: f64) -> Option<u64> {
    let (nx, ny) = (t.nx as i64, t.ny as i64);
    let s = &t.slices[0];
    let free = |i: i64, j: i64| i >= 0 && j >= 0 && i < nx && j < ny && s.cost[(j * nx + i) as usize].is_finite();
    let ground = |i: i64, j: i64| s.ground[(j * nx + i) as usize] as f64;
    let cost = |i: i64, j: i64| s.cost[(j * nx + i) as usize] as f64;
    let mut dist = vec![u64::MAX; (nx * ny) as usize];
    let mut heap = BinaryHeap::new();
    let key = |i: i64, j: i64| (j * nx + i) as usize;
    dist[key(start.i as i64, start.j as i64)] = 0;
    heap.push(Reverse((0u64, start.i as i64, start.j as i64)));
    while let Some(Reverse((d, i, j))) = heap.pop() {
        if d > dist[key(i, j)] {
            continue;
        }
        if (i as usize, j as usize) == (goal.i, goal.j) {
            return Some(d);
        }
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                let (ni, nj) = (i + di, j + dj);
                if (di, dj) == (0, 0) || !free(ni, nj) {
                    continue;
                }
                if di != 0 && dj != 0 && !(free(i + di, j) && free(i, j + dj)) {
                    continue;
                }
                let dz = ground(ni, nj) - ground(i, j);
                if dz.abs() > max_step {
                    continue;
                }
                let h = t.cell_size * ((di * di + dj * dj) as f64).sqrt();
                let len = (h * h + dz * dz).sqrt();
                let w = (len * (1.0 + lambda * 0.5 * (cost(i, j) + cost(ni, nj))) * 1e6).ceil() as u64;
                let nd = d + w;
                if nd < dist[key(ni, nj)] {
                    dist[key(ni, nj)] = nd;
                    heap.push(Reverse((nd, ni, nj)));
                }
            }
        }
    }
    None
}

fn pick_free(rng: &mut ChaCha8Rng, free: &[CellId]) -> CellId {
    free[rng.random_range(0..free.len())]
}

#[test]
fn astar_matches_dijkstra_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut compared = 0;
    for case in 0..100 {
        let n = rng.random_range(5..=30);
        let t = random_grid(&mut rng, n, 0.3, case % 2 == 1);
        let free = free_cells(&t);
        if free.len() < 2 {
            continue;
        }
        for lambda in [0.0, 1.0] {
            let cfg = PlannerConfig { cost_weight: lambda, max_step: 0.25 };
            for _ in 0..3 {
                let (a, b) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free));
                let want = dijkstra(&t, a, b, lambda, cfg.max_step);
                match astar(&t, a, b, &cfg) {
                    Ok(p) => {
                        assert_eq!(Some(p.cost_units), want, "case {case}");
                        assert!(validate_path(&t, &p, cfg.max_step));
                        assert!((path_length(&t, &p.cells) - p.length).abs() < 1e-9);
                        compared += 1;
                    }
                    Err(PlanError::NoPath { .. }) => assert_eq!(want, None, "case {case}"),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
    assert!(compared > 300);
}

#[test]
fn twenty_by_twenty_length_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = random_grid(&mut rng, 20, 0.25, false);
    let free = free_cells(&t);
    let cfg = PlannerConfig { cost_weight: 0.0, max_step: 0.25 };
    for _ in 0..50 {
        let (a, b) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free));
        if let Some(units) = dijkstra(&t, a, b, 0.0, cfg.max_step) {
            let p = astar(&t, a, b, &cfg).unwrap();
            assert_eq!(p.cost_units, units);
        }
    }
}

#[test]
fn straight_corridor_close_to_euclidean() {
    let t = Tomogram::flat(40, 3, 0.5, 0.0);
    let cfg = PlannerConfig { cost_weight: 0.0, max_step: 0.25 };
    let (a, b) = (CellId::new(0, 0, 0), CellId::new(0, 39, 2));
    let p = astar(&t, a, b, &cfg).unwrap();
    let euclid = (t.world_pos(a) - t.world_pos(b)).norm();
    assert!(p.length - euclid <= 0.5 * 2f64.sqrt() + 1e-12);
}

#[test]
fn distances_symmetric_and_triangle_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = random_grid(&mut rng, 25, 0.2, true);
    let free = free_cells(&t);
    let cfg = PlannerConfig::default();
    for _ in 0..60 {
        let (a, b, c) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free), pick_free(&mut rng, &free));
        assert_eq!(path_distance(&t, a, a, &cfg).unwrap(), 0.0);
        match (path_distance(&t, a, b, &cfg), path_distance(&t, b, a, &cfg)) {
            (Ok(x), Ok(y)) => assert_eq!(x, y),
            (Err(_), Err(_)) => {}
            other => panic!("asymmetric reachability {other:?}"),
        }
        // Path distance is the length of the cost-optimal path, so the
        // inequality is checked on the optimised cost itself.
        let cost = |x, y| astar(&t, x, y, &cfg).ok().map(|p| p.cost_units);
        if let (Some(ab), Some(bc), Some(ac)) = (cost(a, b), cost(b, c), cost(a, c)) {
            assert!(ac <= ab + bc);
        }
    }
    let lengths = PlannerConfig { cost_weight: 0.0, ..cfg };
    for _ in 0..60 {
        let (a, b, c) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free), pick_free(&mut rng, &free));
        let d = |x, y| path_distance(&t, x, y, &lengths).ok();
        if let (Some(ab), Some(bc), Some(ac)) = (d(a, b), d(b, c), d(a, c)) {
            assert!(ac <= ab + bc + 1e-9);
        }
    }
}

#[test]
fn smoothing_on_random_mazes_stays_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..40 {
        let t = random_grid(&mut rng, 30, 0.25, case % 3 == 0);
        let free = free_cells(&t);
        let cfg = PlannerConfig::default();
        for _ in 0..4 {
            let (a, b) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free));
            let Ok(p) = astar(&t, a, b, &cfg) else { continue };
            let s = smooth_path(&p, &t, &cfg);
            assert!(s.length <= p.length + 1e-12);
            assert_eq!((s.cells.first(), s.cells.last()), (p.cells.first(), p.cells.last()));
            for c in &s.cells {
                assert!(t.is_free(*c));
            }
            for w in s.cells.windows(2) {
                assert!(is_valid_move(&t, w[0], w[1], cfg.max_step), "case {case}: {:?}", w);
            }
            assert_eq!(smooth_path(&s, &t, &cfg).length, s.length);
        }
    }
}

#[test]
fn astar_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let t = random_grid(&mut rng, 30, 0.2, false);
    let free = free_cells(&t);
    let cfg = PlannerConfig::default();
    for _ in 0..20 {
        let (a, b) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free));
        assert_eq!(astar(&t, a, b, &cfg), astar(&t, a, b, &cfg));
    }
}

#[test]
fn vertical_transition_between_slices() {
    let mut t = Tomogram::flat(6, 1, 0.5, 0.0);
    let mut upper = t.slices[0].clone();
    upper.base = 1.0;
    upper.ground = vec![0.2; 6];
    for k in 0..6 {
        // Lower slice is cut at x = 3; the upper slice bridges it.
        if k == 3 {
            t.slices[0].cost[k] = f32::INFINITY;
        }
    }
    t.slices.push(upper);
    let cfg = PlannerConfig { cost_weight: 0.0, max_step: 0.25 };
    let p = astar(&t, CellId::new(0, 0, 0), CellId::new(0, 5, 0), &cfg).unwrap();
    assert!(p.cells.iter().any(|c| c.slice == 1));
    assert!(validate_path(&t, &p, cfg.max_step));
    let strict = PlannerConfig { max_step: 0.1, ..cfg };
    assert!(matches!(astar(&t, CellId::new(0, 0, 0), CellId::new(0, 5, 0), &strict), Err(PlanError::NoPath { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn smoothing_never_lengthens(seed in any::<u64>(), density in 0.0f64..0.35) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_grid(&mut rng, 16, density, false);
        let free = free_cells(&t);
        prop_assume!(free.len() >= 2);
        let (a, b) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free));
        let cfg = PlannerConfig::default();
        if let Ok(p) = astar(&t, a, b, &cfg) {
            let s = smooth_path(&p, &t, &cfg);
            prop_assert!(s.length <= p.length + 1e-12);
            prop_assert!(validate_path(&t, &s, cfg.max_step));
        }
    }

    #[test]
    fn path_distance_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_grid(&mut rng, 12, 0.2, true);
        let free = free_cells(&t);
        prop_assume!(free.len() >= 2);
        let (a, b) = (pick_free(&mut rng, &free), pick_free(&mut rng, &free));
        let cfg = PlannerConfig::default();
        prop_assert_eq!(path_distance(&t, a, b, &cfg).ok(), path_distance(&t, b, a, &cfg).ok());
    }
}
