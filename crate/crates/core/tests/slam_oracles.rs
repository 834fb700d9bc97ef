use nalgebra::{Isometry3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tgf_core::slam_eval::*;
use tgf_core::{Pose, PoseSeq};

fn random_walk(rng: &mut ChaCha8Rng, n: usize) -> PoseSeq {
    let mut iso = Isometry3::identity();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        out.push(Pose::from_isometry(k as f64 * 0.1, &iso));
        let step = Isometry3::new(
            Vector3::new(rng.random_range(0.3..1.0), rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1)),
            Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.3..0.3)),
        );
        iso *= step;
    }
    PoseSeq::new(out).unwrap()
}

fn rigid(rng: &mut ChaCha8Rng) -> Isometry3<f64> {
    Isometry3::new(
        Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)),
        Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
    )
}

fn transform(seq: &[Pose], t: &Isometry3<f64>) -> Vec<Pose> {
    seq.iter().map(|p| Pose::from_isometry(p.t, &(t * p.isometry()))).collect()
}

#[test]
fn global_rigid_transform_leaves_errors_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let gt = random_walk(&mut rng, 80);
        let est = PoseSeq::new(transform(gt.entries(), &rigid(&mut rng))).unwrap();
        let r = relative_errors(&gt, &est).unwrap();
        assert!(r.t_rel < 1e-9 && r.r_rel < 1e-6, "{r:?}");
    }
}

#[test]
fn concat_preserves_within_segment_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let gt = random_walk(&mut rng, 60);
    let e = gt.entries();
    let s0 = PoseSeq::new(e[..25].to_vec()).unwrap();
    let s1_orig = transform(&e[40..], &rigid(&mut rng));
    let s1 = PoseSeq::new(s1_orig.clone()).unwrap();
    let out = concat_segments(&[s0.clone(), s1], &gt).unwrap();
    let o = out.entries();
    assert_eq!(&o[..25], s0.entries());
    assert!((o[25].isometry().translation.vector - e[40].translation).norm() < 1e-9);
    for k in 0..s1_orig.len() - 1 {
        let want = s1_orig[k].isometry().inverse() * s1_orig[k + 1].isometry();
        let got = o[25 + k].isometry().inverse() * o[25 + k + 1].isometry();
        assert!((want.translation.vector - got.translation.vector).norm() < 1e-9);
        assert!(want.rotation.angle_to(&got.rotation) < 1e-9);
    }
    assert_eq!(concat_segments(std::slice::from_ref(&gt), &gt).unwrap(), gt);
}

#[test]
fn split_perfect_trajectory_scores_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let gt = random_walk(&mut rng, 200);
        // Drop random long runs; each surviving piece restarts in its own frame.
        let mut est = Vec::new();
        let mut k = 0;
        let mut frame = Isometry3::identity();
        while k < 200 {
            let keep = rng.random_range(5..40);
            est.extend(transform(&gt.entries()[k..(k + keep).min(200)], &frame));
            k += keep + rng.random_range(11..25);
            frame = rigid(&mut rng);
        }
        let est = PoseSeq::new(est).unwrap();
        let (r, _) = evaluate(&gt, &est, &SlamEvalConfig::default()).unwrap();
        assert!(r.segments >= 2);
        assert!(r.t_rel < 1e-9 && r.r_rel < 1e-6, "{r:?}");
    }
}

#[test]
fn short_gaps_interpolated_without_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gt = random_walk(&mut rng, 50);
    let est: Vec<Pose> = gt.entries().iter().enumerate().filter(|(k, _)| k % 4 != 1).map(|(_, p)| *p).collect();
    let (r, joined) = evaluate(&gt, &PoseSeq::new(est).unwrap(), &SlamEvalConfig::default()).unwrap();
    assert_eq!(r.segments, 1);
    assert_eq!(r.frames_interpolated, 12);
    assert_eq!(joined.len(), 49);
}

#[test]
fn similarity_recovers_scale_and_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt = random_walk(&mut rng, 40);
    let doubled = PoseSeq::new(gt.entries().iter().map(|p| Pose::new(p.t, 2.0 * p.translation, p.rotation)).collect()).unwrap();
    let (aligned, sim) = similarity_align(&doubled, &gt).unwrap();
    assert!((sim.scale - 0.5).abs() < 1e-9);
    for (a, b) in aligned.entries().iter().zip(gt.entries()) {
        assert!((a.translation - b.translation).norm() < 1e-9);
    }
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians());
    let rotated = PoseSeq::new(transform(gt.entries(), &Isometry3::from_parts(Default::default(), rot))).unwrap();
    let (aligned, sim) = similarity_align(&rotated, &gt).unwrap();
    assert!((sim.scale - 1.0).abs() < 1e-9);
    for (a, b) in aligned.entries().iter().zip(gt.entries()) {
        assert!((a.translation - b.translation).norm() < 1e-9);
        assert!(a.rotation.angle_to(&b.rotation) < 1e-9);
    }
}

fn residual(sim: &Similarity, src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
    src.iter().zip(dst).map(|(x, y)| (y - (sim.scale * (sim.rotation * x) + sim.translation)).norm_squared()).sum()
}

#[test]
fn noisy_similarity_is_a_grid_refined_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sigma = 0.02;
    let noise = Normal::new(0.0, sigma).unwrap();
    for _ in 0..10 {
        let dst: Vec<Vector3<f64>> =
            (0..100).map(|_| Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-3.0..3.0))).collect();
        let truth = Similarity {
            scale: rng.random_range(0.3..3.0),
            rotation: UnitQuaternion::from_euler_angles(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)),
            translation: Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
        };
        // src maps onto dst through `truth`, up to noise.
        let src: Vec<Vector3<f64>> = dst
            .iter()
            .map(|y| {
                let x = truth.rotation.inverse() * (y - truth.translation) / truth.scale;
                x + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
            })
            .collect();
        let sim = fit_similarity(&src, &dst, true).unwrap();
        assert!((sim.scale - truth.scale).abs() < 0.01 * truth.scale);
        assert!(sim.rotation.angle_to(&truth.rotation) < 1e-2);
        let rms = (residual(&sim, &src, &dst) / dst.len() as f64).sqrt();
        assert!(rms < 3.0 * sigma * truth.scale * 3f64.sqrt(), "rms {rms}");
        // Refinement over a small grid of perturbations never improves the fit.
        let base = residual(&sim, &src, &dst);
        for ds in [-1e-4, 0.0, 1e-4] {
            for axis in [Vector3::x_axis(), Vector3::y_axis(), Vector3::z_axis()] {
                for da in [-1e-4, 1e-4] {
                    for dt in [-1e-3, 0.0, 1e-3] {
                        let p = Similarity {
                            scale: sim.scale * (1.0 + ds),
                            rotation: UnitQuaternion::from_axis_angle(&axis, da) * sim.rotation,
                            translation: sim.translation + Vector3::new(dt, -dt, dt),
                        };
                        assert!(residual(&p, &src, &dst) >= base - 1e-9 * base.max(1.0));
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn self_comparison_is_exactly_zero(seed in any::<u64>(), n in 2usize..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_walk(&mut rng, n);
        let r = relative_errors(&gt, &gt).unwrap();
        prop_assert_eq!((r.t_rel, r.r_rel), (0.0, 0.0));
    }

    #[test]
    fn alignment_is_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_walk(&mut rng, 30);
        let est = PoseSeq::new(transform(gt.entries(), &rigid(&mut rng))).unwrap();
        let noisy = PoseSeq::new(est.entries().iter().map(|p| Pose::new(p.t, p.translation * 1.3 + Vector3::new(rng.random_range(-0.1..0.1), 0.0, 0.0), p.rotation)).collect()).unwrap();
        let (once, _) = similarity_align(&noisy, &gt).unwrap();
        let (twice, _) = similarity_align(&once, &gt).unwrap();
        for (a, b) in once.entries().iter().zip(twice.entries()) {
            prop_assert!((a.translation - b.translation).norm() < 1e-9);
            prop_assert!(a.rotation.angle_to(&b.rotation) < 1e-9);
        }
    }

    #[test]
    fn errors_invariant_under_global_transform(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = random_walk(&mut rng, 40);
        let est = PoseSeq::new(gt.entries().iter().map(|p| Pose::new(p.t, p.translation * 1.1, p.rotation)).collect()).unwrap();
        let moved = PoseSeq::new(transform(est.entries(), &rigid(&mut rng))).unwrap();
        let (a, b) = (relative_errors(&gt, &est).unwrap(), relative_errors(&gt, &moved).unwrap());
        prop_assert!((a.t_rel - b.t_rel).abs() < 1e-9);
        prop_assert!((a.r_rel - b.r_rel).abs() < 1e-6);
    }
}
