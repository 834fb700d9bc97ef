use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Isometry3, Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgf_core::camview::{Face, PinholeCamera};
use tgf_core::occupancy::*;
use tgf_core::synth::{render_pinhole, AnalyticScene};
use tgf_core::{Image, PointCloud};

fn brute_force_binning(cloud: &PointCloud, spec: &GridSpec, min_points: usize) -> Vec<([usize; 3], u16)> {
    let mut votes: BTreeMap<usize, BTreeMap<u16, usize>> = BTreeMap::new();
    for (k, p) in cloud.points().iter().enumerate() {
        let mut v = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let f = ((p[a] - spec.origin[a]) / spec.resolution).floor();
            inside &= f >= 0.0 && f < spec.dims[a] as f64;
            v[a] = f.max(0.0) as usize;
        }
        if inside {
            let idx = v[0] + spec.dims[0] * (v[1] + spec.dims[1] * v[2]);
            *votes.entry(idx).or_default().entry(cloud.labels().unwrap()[k] as u16).or_default() += 1;
        }
    }
    votes
        .into_iter()
        .filter(|(_, m)| m.values().sum::<usize>() >= min_points)
        .map(|(idx, m)| {
            let best = m.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap().0;
            let (nx, ny) = (spec.dims[0], spec.dims[1]);
            ([idx % nx, (idx / nx) % ny, idx / (nx * ny)], *best)
        })
        .collect()
}

#[test]
fn binning_matches_brute_force_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..50 {
        let n = rng.random_range(1..3000);
        let pts: Vec<Point3<f64>> =
            (0..n).map(|_| Point3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-1.0..4.0))).collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let cloud = PointCloud::new(pts, Some(labels)).unwrap();
        let spec = GridSpec::new(Point3::new(-5.0, -4.3, -0.7), [0.5, 0.4, 1.0][case % 3], [20, 22, 6]).unwrap();
        let min_points = 1 + case % 3;
        let got = occupancy_from_cloud(&cloud, &spec, min_points).unwrap();
        assert_eq!(got.occupied_voxels(), brute_force_binning(&cloud, &spec, min_points), "case {case}");
        for (o, l) in got.occupied.iter().zip(&got.labels) {
            assert!(*o || *l == 0);
        }
    }
}

#[test]
fn slanted_plane_matches_analytic_gradient() {
    // Camera-frame plane z = z0 + a * y; depth along pixel rays in closed form.
    let (w, h) = (120usize, 90usize);
    let cam = PinholeCamera::new(60.0, 60.0, 60.0, 45.0, w, h, Face::Front.rotation()).unwrap();
    let (z0, a) = (4.0, 0.9);
    // Depth is constant along image rows, so the u coordinate is unused.
    let depth_at = |_u: f64, v: f64| {
        let ry = (v + 0.5 - cam.cy) / cam.fy;
        let z = z0 / (1.0 - a * ry);
        if z > 0.0 { z } else { f64::INFINITY }
    };
    let z: Vec<f32> = (0..w * h).map(|i| depth_at((i % w) as f64, (i / w) as f64) as f32).collect();
    let img = Image::depth(w, h, z).unwrap();
    for thr in [0.005, 0.01, 0.02, 0.05] {
        let mask = gradient_filter(&img, thr).unwrap();
        let mut ambiguous = 0;
        for i in 0..w * h {
            let (u, v) = ((i % w) as f64, (i / w) as f64);
            let zc = depth_at(u, v);
            let nbr = [(u, v - 1.0), (u, v + 1.0)]
                .into_iter()
                .filter(|&(_, vv)| vv >= 0.0 && vv < h as f64)
                .map(|(uu, vv)| (depth_at(uu, vv) - zc).abs())
                .fold(0.0, f64::max);
            let margin = nbr - thr * zc;
            if margin.abs() < 1e-5 * zc {
                ambiguous += 1;
                continue;
            }
            assert_eq!(mask[i], margin < 0.0, "thr {thr} pixel {i}");
        }
        // Whole rows share a depth, so at most one row can sit on the threshold.
        assert!(ambiguous <= w, "{ambiguous}");
    }
}

fn wall_cam(width: usize) -> PinholeCamera {
    let f = width as f64 / 2.0;
    PinholeCamera::new(f, f, f, f, width, width, Face::Front.rotation()).unwrap()
}

fn wall_spec() -> GridSpec {
    GridSpec::new(Point3::new(-10.25, -10.25, -10.25), 0.5, [41, 41, 41]).unwrap()
}

#[test]
fn wall_voxels_match_projection_oracle() {
    let scene = AnalyticScene { shapes: vec![(tgf_core::synth::Shape::Plane { point: Point3::new(3.0, 0.0, 0.0), normal: -Vector3::x() }, 2)] };
    let pose = Isometry3::identity();
    let cam = wall_cam(64);
    let (_, depth, _) = render_pinhole(&scene, &cam, &pose);
    let spec = wall_spec();
    let grid = occupancy_from_depth(&[(depth, cam)], &pose, &spec, 0.1).unwrap();
    let mut oracle = BTreeSet::new();
    for v in 0..64 {
        for u in 0..64 {
            let d = cam.rotation.inverse() * cam.pixel_to_ray(u as f64, v as f64);
            let (_, _, x) = scene.cast(&Point3::origin(), &d).unwrap();
            oracle.insert(spec.voxel_of(&x).unwrap());
        }
    }
    let got: BTreeSet<[usize; 3]> = grid.occupied_voxels().into_iter().map(|(v, l)| {
        assert_eq!(l, 0);
        v
    }).collect();
    assert_eq!(got, oracle);
    let slab = spec.voxel_of(&Point3::new(3.0, 0.0, 0.0)).unwrap()[0];
    assert!(got.iter().all(|v| v[0] == slab));
}

#[test]
fn two_views_of_a_wall_agree() {
    let scene = AnalyticScene { shapes: vec![(tgf_core::synth::Shape::Plane { point: Point3::new(3.0, 0.0, 0.0), normal: -Vector3::x() }, 2)] };
    let pose = Isometry3::translation(0.0, 0.0, 0.0);
    let spec = wall_spec();
    let view = |n| {
        let c = wall_cam(n);
        (render_pinhole(&scene, &c, &pose).1, c)
    };
    let (a, b) = (view(64), view(128));
    let ga = occupancy_from_depth(std::slice::from_ref(&a), &pose, &spec, 0.1).unwrap();
    let gb = occupancy_from_depth(std::slice::from_ref(&b), &pose, &spec, 0.1).unwrap();
    let both = occupancy_from_depth(&[a, b], &pose, &spec, 0.1).unwrap();
    assert_eq!(ga, gb);
    assert_eq!(both, ga);
}

#[test]
fn infinite_depth_gives_empty_grid() {
    let cam = wall_cam(16);
    let d = Image::depth(16, 16, vec![f32::INFINITY; 256]).unwrap();
    assert_eq!(occupancy_from_depth(&[(d, cam)], &Isometry3::identity(), &wall_spec(), 0.1).unwrap().count(), 0);
}

#[test]
fn iou_window_and_origins() {
    // Same world voxels stored in grids with different origins compare equal.
    let a = GridSpec::new(Point3::new(0.0, 0.0, 0.0), 0.5, [10, 10, 4]).unwrap();
    let b = GridSpec::new(Point3::new(-1.0, -2.0, 0.0), 0.5, [14, 14, 4]).unwrap();
    let mut ga = OccupancyGrid::empty(a);
    let mut gb = OccupancyGrid::empty(b);
    for p in [Point3::new(0.2, 0.3, 0.1), Point3::new(3.1, 2.2, 1.2)] {
        ga.set(a.voxel_of(&p).unwrap(), 1);
        gb.set(b.voxel_of(&p).unwrap(), 1);
    }
    let w = EvalWindow::new(Point3::new(2.0, 2.0, 0.0));
    assert_eq!(occupancy_iou(&ga, &gb, &w).unwrap().iou, 1.0);
    // Voxels outside the window are ignored.
    let tight = EvalWindow { range_xy: 1.0, ..EvalWindow::new(Point3::new(0.0, 0.0, 0.0)) };
    gb.set(b.voxel_of(&Point3::new(4.5, 4.5, 0.2)).unwrap(), 1);
    assert_eq!(occupancy_iou(&ga, &gb, &tight).unwrap().iou, 1.0);
    assert!(occupancy_iou(&ga, &gb, &w).unwrap().iou < 1.0);
}

fn random_grid(rng: &mut ChaCha8Rng, spec: GridSpec, p: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::empty(spec);
    for i in 0..spec.num_voxels() {
        if rng.random_bool(p) {
            g.occupied[i] = true;
            g.labels[i] = rng.random_range(1..4);
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iou_symmetric_and_monotone(seed in any::<u64>(), p in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GridSpec::new(Point3::new(-2.0, -2.0, -1.0), 0.5, [8, 8, 6]).unwrap();
        let (a, b) = (random_grid(&mut rng, spec, p), random_grid(&mut rng, spec, p));
        let w = EvalWindow::new(Point3::origin());
        let ab = occupancy_iou(&a, &b, &w).unwrap();
        let ba = occupancy_iou(&b, &a, &w).unwrap();
        prop_assert_eq!(ab.iou, ba.iou);
        prop_assert!((0.0..=1.0).contains(&ab.iou));
        // Adding a ground-truth voxel to the prediction cannot lower IoU.
        if let Some(i) = (0..spec.num_voxels()).find(|&i| b.occupied[i] && !a.occupied[i]) {
            let mut a2 = a.clone();
            a2.occupied[i] = true;
            a2.labels[i] = b.labels[i];
            prop_assert!(occupancy_iou(&a2, &b, &w).unwrap().iou >= ab.iou);
        }
    }

    #[test]
    fn gradient_invalid_set_grows_as_threshold_shrinks(seed in any::<u64>(), t1 in 0.001f64..0.5, t2 in 0.001f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f32> = (0..20 * 15).map(|_| if rng.random_bool(0.05) { f32::INFINITY } else { rng.random_range(1.0f32..3.0) }).collect();
        let img = Image::depth(20, 15, z).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let m_lo = gradient_filter(&img, lo).unwrap();
        let m_hi = gradient_filter(&img, hi).unwrap();
        for (a, b) in m_lo.iter().zip(&m_hi) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn binary_and_text_round_trip(seed in any::<u64>(), nx in 1usize..9, ny in 1usize..9, nz in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GridSpec::new(Point3::new(rng.random_range(-5.0..5.0), 0.0, -1.5), 0.25, [nx, ny, nz]).unwrap();
        let g = random_grid(&mut rng, spec, 0.3);
        let mut buf = Vec::new();
        write_occupancy(&g, &mut buf).unwrap();
        prop_assert_eq!(read_occupancy(buf.as_slice()).unwrap(), g.clone());
        prop_assert_eq!(parse_occupancy_text(&format_occupancy_text(&g)).unwrap(), g);
    }

    #[test]
    fn cloud_grid_labels_only_on_occupied(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point3<f64>> = (0..200).map(|_| Point3::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), rng.random_range(0.0..2.0))).collect();
        let labels = (0..200).map(|_| rng.random_range(0..6)).collect();
        let spec = GridSpec::new(Point3::origin(), 0.5, [8, 8, 4]).unwrap();
        let g = occupancy_from_cloud(&PointCloud::new(pts, Some(labels)).unwrap(), &spec, 2).unwrap();
        for (o, l) in g.occupied.iter().zip(&g.labels) {
            prop_assert!(*o || *l == 0);
        }
    }
}
