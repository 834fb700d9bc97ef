//! Throughput of the planning, resampling, voxelisation and tour kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{Isometry3, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgf_core::camview::{resample_view, Face, Modality, PinholeCamera, Sampling};
use tgf_core::occupancy::{occupancy_from_cloud, GridSpec};
use tgf_core::planner::{astar, PlannerConfig};
use tgf_core::sampler::solve_tsp;
use tgf_core::synth::{render_rig, AnalyticScene};
use tgf_core::{CellId, PointCloud, Tomogram};

fn bench_astar(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut t = Tomogram::flat(200, 200, 0.2, 0.0);
    for i in 0..200 {
        for j in 0..200 {
            let cost = if rng.random_bool(0.2) { None } else { Some(rng.random_range(0.0f32..1.0)) };
            t.set_cost(CellId::new(0, i, j), cost);
        }
    }
    t.set_cost(CellId::new(0, 0, 0), Some(0.0));
    t.set_cost(CellId::new(0, 199, 199), Some(0.0));
    let cfg = PlannerConfig::default();
    c.bench_function("astar_200x200", |b| {
        b.iter(|| astar(black_box(&t), CellId::new(0, 0, 0), CellId::new(0, 199, 199), &cfg).ok())
    });
}

fn bench_resample(c: &mut Criterion) {
    let rig = render_rig(&AnalyticScene::sphere(5.0), &Isometry3::identity(), 256);
    let cam = PinholeCamera::new(800.0, 800.0, 800.0, 450.0, 1600, 900, Face::Front.rotation()).unwrap();
    let mut g = c.benchmark_group("resample_1600x900");
    g.sample_size(10);
    g.bench_function("rgb_bilinear", |b| b.iter(|| resample_view(black_box(&rig), &cam, Modality::Rgb, Sampling::Bilinear).unwrap()));
    g.bench_function("depth_nearest", |b| b.iter(|| resample_view(black_box(&rig), &cam, Modality::Depth, Sampling::Nearest).unwrap()));
    g.finish();
}

fn bench_occupancy(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 1_000_000;
    let pts = (0..n)
        .map(|_| Point3::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0), rng.random_range(-2.0..8.0)))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..16)).collect();
    let cloud = PointCloud::new(pts, Some(labels)).unwrap();
    let spec = GridSpec::around(Point3::origin(), 25.0, [-2.0, 8.0], 0.5).unwrap();
    let mut g = c.benchmark_group("occupancy");
    g.sample_size(10);
    g.bench_function("from_cloud_1m", |b| b.iter(|| occupancy_from_cloud(black_box(&cloud), &spec, 1).unwrap()));
    g.finish();
}

fn bench_tsp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<(f64, f64)> = (0..60).map(|_| (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0))).collect();
    let d: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| (a.0 - b.0).hypot(a.1 - b.1)).collect()).collect();
    c.bench_function("tsp_60", |b| b.iter(|| solve_tsp(black_box(&d)).unwrap()));
}

criterion_group!(benches, bench_astar, bench_resample, bench_occupancy, bench_tsp);
criterion_main!(benches);
