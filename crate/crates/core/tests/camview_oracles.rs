use nalgebra::{Isometry3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgf_core::camview::*;
use tgf_core::synth::{render_rig, AnalyticScene};

fn sphere_rig(size: usize) -> CubemapRig {
    render_rig(&AnalyticScene::sphere(5.0), &Isometry3::identity(), size)
}

#[test]
fn identity_resampling_is_bit_exact_for_every_face() {
    let scene = AnalyticScene::plane_and_wall(4.0);
    let pose = Isometry3::new(Vector3::new(0.0, 0.5, 1.2), Vector3::new(0.0, 0.0, 0.3));
    let rig = render_rig(&scene, &pose, 64);
    for f in FACES {
        let cam = PinholeCamera::face(f, 64);
        let imgs = rig.face(f);
        for (m, want) in [(Modality::Rgb, &imgs.rgb), (Modality::Depth, &imgs.depth), (Modality::Semantic, &imgs.semantic)] {
            let got = resample_view(&rig, &cam, m, Sampling::Nearest).unwrap();
            assert_eq!(&got, want.as_ref().unwrap(), "{f:?} {m:?}");
        }
    }
}

#[test]
fn yawed_front_camera_matches_left_face() {
    let rig = render_rig(&AnalyticScene::plane_and_wall(3.0), &Isometry3::translation(0.0, 0.0, 1.0), 48);
    let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
    let mut cam = PinholeCamera::face(Face::Front, 48);
    cam.rotation = Face::Front.rotation() * yaw.inverse();
    for (m, want) in [(Modality::Rgb, &rig.face(Face::Left).rgb), (Modality::Semantic, &rig.face(Face::Left).semantic)] {
        let got = resample_view(&rig, &cam, m, Sampling::Nearest).unwrap();
        assert_eq!(&got, want.as_ref().unwrap());
    }
}

#[test]
fn sphere_depth_recovers_radius() {
    let rig = sphere_rig(512);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let rot = UnitQuaternion::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0));
        let cam = PinholeCamera::new(150.0, 140.0, 160.0, 100.0, 320, 200, rot).unwrap();
        let depth = resample_view(&rig, &cam, Modality::Depth, Sampling::Nearest).unwrap();
        let d = depth.as_f32().unwrap();
        let mut worst = 0.0f64;
        for v in 0..cam.height {
            for u in 0..cam.width {
                let ray = cam.pixel_to_ray(u as f64, v as f64);
                let range = d[v * cam.width + u] as f64 / ray.z;
                worst = worst.max((range - 5.0).abs());
            }
        }
        assert!(worst < 1e-4, "worst range error {worst}");
    }
}

#[test]
fn face_pixel_ray_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let size = 97;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let f = FACES[rng.random_range(0..6)];
        let (u, v) = (rng.random_range(0.01..size as f64 - 0.01), rng.random_range(0.01..size as f64 - 0.01));
        let h = size as f64 / 2.0;
        let c = Vector3::new((u - h) / h, (v - h) / h, 1.0).normalize();
        let d = f.matrix().transpose() * c;
        let (g, u2, v2) = ray_to_face(&d, size).unwrap();
        assert_eq!(g, f);
        worst = worst.max((u - u2).abs()).max((v - v2).abs());
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn random_directions_land_inside_their_face() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if d.norm() < 1e-6 {
            continue;
        }
        let (f, u, v) = ray_to_face(&d, 33).unwrap();
        assert!((0.0..33.0).contains(&u) && (0.0..33.0).contains(&v));
        assert!(f.axis().dot(&d.normalize()) >= 1.0 / 3f64.sqrt() - 1e-12);
    }
}

#[test]
fn depth_conversion_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let (f, _, _) = ray_to_face(&d, 16).unwrap();
        let r = rng.random_range(0.1..100.0);
        let z_face = r * d.dot(&f.axis());
        let axis_t = Vector3::new(0.3, -0.2, 0.9).normalize();
        let z_t = z_face / d.dot(&f.axis()) * d.dot(&axis_t);
        let back = z_t / d.dot(&axis_t);
        assert!((back - r).abs() < 1e-9 * r.max(1.0));
    }
}

#[test]
fn lidar_sphere_and_cylinder() {
    let pattern = LidarPattern { channels: 16, vfov: [-0.26, 0.26], azimuth_steps: 360 };
    let cloud = lidar_from_cubemap(&sphere_rig(256), &pattern).unwrap();
    assert_eq!(cloud.len(), 16 * 360);
    for p in cloud.points() {
        assert!((p.coords.norm() - 5.0).abs() < 1e-3);
    }
    let cyl = render_rig(&AnalyticScene::cylinder(2.0), &Isometry3::identity(), 256);
    let ring = LidarPattern { channels: 1, vfov: [-0.1, 0.1], azimuth_steps: 4 };
    let cloud = lidar_from_cubemap(&cyl, &ring).unwrap();
    assert_eq!(cloud.len(), 4);
    for p in cloud.points() {
        assert!((p.coords.norm() - 2.0).abs() < 1e-3, "{p}");
    }
    let mut sky = sphere_rig(32);
    let n = 32 * 32;
    sky.faces[Face::Top.index()].depth = Some(tgf_core::Image::depth(32, 32, vec![f32::INFINITY; n]).unwrap());
    let up = LidarPattern { channels: 2, vfov: [1.2, 1.5], azimuth_steps: 8 };
    assert_eq!(lidar_from_cubemap(&sky, &up).unwrap().len(), 0);
    let level = LidarPattern { channels: 1, vfov: [0.0, 0.0], azimuth_steps: 8 };
    assert_eq!(lidar_from_cubemap(&sky, &level).unwrap().len(), 8);
}

#[test]
fn bilinear_is_close_to_nearest_on_smooth_texture() {
    let rig = render_rig(&AnalyticScene::plane_and_wall(4.0), &Isometry3::translation(0.0, 0.0, 1.0), 128);
    let cam = PinholeCamera::new(100.0, 100.0, 80.0, 60.0, 160, 120, Face::Front.rotation()).unwrap();
    let a = resample_view(&rig, &cam, Modality::Rgb, Sampling::Nearest).unwrap();
    let b = resample_view(&rig, &cam, Modality::Rgb, Sampling::Bilinear).unwrap();
    let (a, b) = (a.as_u8().unwrap(), b.as_u8().unwrap());
    let mean: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / a.len() as f64;
    assert!(mean < 5.0, "{mean}");
}

#[test]
fn rotation_equivariance() {
    // Rotating the body by R and the camera by R^-1 views the same world directions.
    let scene = AnalyticScene::plane_and_wall(3.0);
    let r = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.7);
    let rig_a = render_rig(&scene, &Isometry3::translation(0.0, 0.0, 1.0), 128);
    let rig_b = render_rig(&scene, &Isometry3::from_parts(nalgebra::Translation3::new(0.0, 0.0, 1.0), r), 128);
    let base = Face::Front.rotation();
    let cam_a = PinholeCamera::new(60.0, 60.0, 40.0, 30.0, 80, 60, base).unwrap();
    let cam_b = PinholeCamera { rotation: base * r, ..cam_a };
    let da = resample_view(&rig_a, &cam_a, Modality::Depth, Sampling::Nearest).unwrap();
    let db = resample_view(&rig_b, &cam_b, Modality::Depth, Sampling::Nearest).unwrap();
    let (da, db) = (da.as_f32().unwrap(), db.as_f32().unwrap());
    let mut bad = 0;
    for (x, y) in da.iter().zip(db) {
        if x.is_finite() != y.is_finite() || (x.is_finite() && (x - y).abs() > 0.05 * x) {
            bad += 1;
        }
    }
    assert!(bad * 100 < da.len(), "{bad} of {} pixels disagree", da.len());
}

#[test]
fn missing_modality_is_reported() {
    let mut rig = sphere_rig(8);
    rig.faces[3].rgb = None;
    let cam = PinholeCamera::face(Face::Front, 8);
    assert!(matches!(
        resample_view(&rig, &cam, Modality::Rgb, Sampling::Nearest),
        Err(CamError::MissingModality { face: "back", .. })
    ));
}

#[test]
fn nuscenes_like_rig_shapes() {
    let rig = sphere_rig(64);
    for k in 0..6 {
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), k as f64 * std::f64::consts::FRAC_PI_3);
        let cam = PinholeCamera::new(1266.0, 1266.0, 800.0, 450.0, 1600, 900, Face::Front.rotation() * yaw.inverse()).unwrap();
        let img = resample_view(&rig, &cam, Modality::Rgb, Sampling::Bilinear).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (1600, 900, 3));
    }
}

#[test]
fn manifest_round_trip() {
    let rig = sphere_rig(16);
    let dir = tempfile::tempdir().unwrap();
    let path = save_rig(&rig, dir.path()).unwrap();
    assert_eq!(load_rig(&path).unwrap(), rig);
}
