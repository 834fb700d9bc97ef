//! Subcommand implementations. Each writes its output in the owning module's
//! format plus a `<output>.meta.json` sidecar holding the tool version, the
//! seed and every parameter needed to reproduce the output.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::Serialize;
use tgf_core::camview::{
    lidar_from_cubemap, load_camera, load_rig, resample_view, save_camera, save_rig, DepthKind, LidarPattern, Modality,
    PinholeCamera, Sampling, FACES,
};
use tgf_core::dense::{densify, trajectory_rng, DenseMetadata, DensifyOptions};
use tgf_core::derived::{disparity_from_depth, flow_from_depth_poses, format_imu_csv, imu_from_poses, StereoRig, GRAVITY};
use tgf_core::geomio::{
    load_image, load_point_cloud_auto, load_pose_seq, save_image_auto, save_point_cloud, save_pose_seq, subsample_density,
    CloudFormat,
};
use tgf_core::occupancy::{
    format_occupancy_text, load_occupancy, occupancy_from_cloud, occupancy_from_depth, occupancy_iou, save_occupancy,
    EvalWindow, GridSpec,
};
use tgf_core::sampler::{coverage, format_sparse_trajectories, group_waypoints, parse_sparse_trajectories, sample_sparse_trajectories};
use tgf_core::slam_eval::{evaluate, format_report_kv, format_report_table};
use tgf_core::synth::{render_pinhole, render_rig, AnalyticScene};
use tgf_core::tomogram::{build_tomogram, load_tomogram, save_tomogram, score_traversability};
use tgf_core::verify::{format_checks_csv, frame_paths, verify_directory};
use tgf_core::{synth, Image, PointCloud};

use crate::config::PipelineConfig;
use crate::{
    BuildTomogramArgs, CliError, CloudScene, Command, DensifyArgs, DeriveCommand, EvalOccArgs, EvalSlamArgs, LidarSimArgs,
    ModalityArg, OccBaselineArgs, OccGtArgs, RenderScene, ResampleArgs, SampleSparseArgs, SamplingArg, SynthCommand,
    VerifyArgs,
};

type CmdResult = Result<(), CliError>;

const TOOL: &str = "tgf";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Sidecar<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    inputs: BTreeMap<&'a str, String>,
    parameters: P,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn write_sidecar<P: Serialize>(out: &Path, command: &str, seed: Option<u64>, inputs: &[(&str, &Path)], parameters: P) -> CmdResult {
    let meta = Sidecar {
        tool: TOOL,
        version: VERSION,
        command,
        seed,
        inputs: inputs.iter().map(|(k, p)| (*k, p.display().to_string())).collect(),
        parameters,
    };
    let mut text = serde_json::to_string_pretty(&meta).context("serialising metadata")?;
    text.push('\n');
    let path = sidecar_path(out);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn prepare_output(path: &Path) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn prepare_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if !path.exists() {
        return Err(CliError::Validation(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

/// Load an input; any failure (missing file, wrong format) is a validation error.
fn load<T, E: Display>(path: &Path, what: &str, f: impl FnOnce(&Path) -> Result<T, E>) -> Result<T, CliError> {
    require_file(path, what)?;
    f(path).map_err(|e| CliError::Validation(format!("cannot read {what} {}: {e}", path.display())))
}

fn invalid<E: Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    prepare_output(path)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn dispatch(cmd: Command, cfg: PipelineConfig) -> CmdResult {
    match cmd {
        Command::Synth(c) => synth_cmd(c, &cfg),
        Command::BuildTomogram(a) => build_tomogram_cmd(a, cfg),
        Command::SampleSparse(a) => sample_sparse_cmd(a, cfg),
        Command::Densify(a) => densify_cmd(a, cfg),
        Command::Resample(a) => resample_cmd(a, &cfg),
        Command::LidarSim(a) => lidar_cmd(a, &cfg),
        Command::Derive(c) => derive_cmd(c, cfg),
        Command::OccGt(a) => occ_gt_cmd(a, cfg),
        Command::OccBaseline(a) => occ_baseline_cmd(a, &cfg),
        Command::EvalOcc(a) => eval_occ_cmd(a, &cfg),
        Command::EvalSlam(a) => eval_slam_cmd(a, &cfg),
        Command::Verify(a) => verify_cmd(a, &cfg),
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn scene_cloud(scene: CloudScene, spacing: f64) -> PointCloud {
    match scene {
        CloudScene::Room => synth::room_with_pillars(10.0, 8.0, &[(3.0, 3.0, 0.4), (7.0, 5.0, 0.5)], spacing),
        CloudScene::Ramp => synth::ramp_scene(0.2, spacing),
        CloudScene::Stairs => synth::stairs_scene(6, 0.15, 0.3, spacing),
        CloudScene::TwoFloor => synth::two_floor_building(spacing),
    }
}

fn analytic(scene: RenderScene, extent: f64) -> Result<AnalyticScene, CliError> {
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(CliError::Validation(format!("--extent must be positive, got {extent}")));
    }
    Ok(match scene {
        RenderScene::Sphere => AnalyticScene::sphere(extent),
        RenderScene::Cylinder => AnalyticScene::cylinder(extent),
        RenderScene::PlaneWall => AnalyticScene::plane_and_wall(extent),
    })
}

fn position(v: &[f64]) -> Result<Point3<f64>, CliError> {
    match v {
        [x, y, z] => Ok(Point3::new(*x, *y, *z)),
        _ => Err(CliError::Validation(format!("--position takes x,y,z, got {} values", v.len()))),
    }
}

fn synth_cmd(cmd: SynthCommand, cfg: &PipelineConfig) -> CmdResult {
    match cmd {
        SynthCommand::Cloud { scene, spacing, out } => {
            if !(spacing > 0.0 && spacing.is_finite()) {
                return Err(CliError::Validation(format!("--spacing must be positive, got {spacing}")));
            }
            let out = cfg.output_path(&out);
            let format = CloudFormat::from_path(&out)
                .ok_or_else(|| CliError::Validation(format!("cannot infer a cloud format from {}", out.display())))?;
            let cloud = scene_cloud(scene, spacing);
            prepare_output(&out)?;
            save_point_cloud(&cloud, &out, format).context("writing cloud")?;
            log::info!("wrote {} points to {}", cloud.len(), out.display());
            write_sidecar(&out, "synth cloud", None, &[], serde_json::json!({ "scene": format!("{scene:?}"), "spacing": spacing }))
        }
        SynthCommand::Rig { scene, extent, size, position: p, out } => {
            if size == 0 {
                return Err(CliError::Validation("--size must be positive".into()));
            }
            let c = position(&p)?;
            let s = analytic(scene, extent)?;
            let out = cfg.output_path(&out);
            prepare_dir(&out)?;
            let pose = Isometry3::translation(c.x, c.y, c.z);
            let rig = render_rig(&s, &pose, size);
            let manifest = save_rig(&rig, &out).context("writing rig")?;
            write_sidecar(
                &manifest,
                "synth rig",
                None,
                &[],
                serde_json::json!({ "scene": format!("{scene:?}"), "extent": extent, "size": size, "position": p }),
            )
        }
        SynthCommand::Frames { scene, extent, poses, camera, out } => {
            let s = analytic(scene, extent)?;
            let seq = load(&poses, "pose file", load_pose_seq)?;
            let cam = load(&camera, "camera file", load_camera)?;
            let out = cfg.output_path(&out);
            prepare_dir(&out)?;
            seq.entries().par_iter().enumerate().try_for_each(|(k, p)| -> anyhow::Result<()> {
                let (rgb, depth, _) = render_pinhole(&s, &cam, &p.isometry());
                let (ip, dp) = frame_paths(&out, k);
                save_image_auto(&rgb, &ip).with_context(|| format!("writing {}", ip.display()))?;
                save_image_auto(&depth, &dp).with_context(|| format!("writing {}", dp.display()))?;
                Ok(())
            })?;
            save_pose_seq(&seq, &out.join("poses.txt")).context("writing poses")?;
            save_camera(&cam, &out.join("camera.toml")).context("writing camera")?;
            write_sidecar(
                &out.join("frames"),
                "synth frames",
                None,
                &[("poses", &poses), ("camera", &camera)],
                serde_json::json!({ "scene": format!("{scene:?}"), "extent": extent, "frames": seq.len() }),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// tomogram, sparse, dense
// ---------------------------------------------------------------------------

fn build_tomogram_cmd(a: BuildTomogramArgs, mut cfg: PipelineConfig) -> CmdResult {
    if let Some(c) = a.cloud {
        cfg.paths.cloud = Some(c);
    }
    if let Some(d) = a.density {
        cfg.tomogram.density = Some(d);
    }
    let cloud_path = cfg.paths.cloud.clone().ok_or_else(|| CliError::Validation("no input cloud (--cloud or --paths.cloud)".into()))?;
    let density = cfg
        .tomogram
        .density
        .ok_or_else(|| CliError::Validation("sampling density is required (--density or --tomogram.density)".into()))?;
    let robot = cfg.robot();
    robot.validate().map_err(invalid)?;
    let weights = cfg.weights();
    weights.validate().map_err(invalid)?;
    let t = &cfg.tomogram;
    if !(density > 0.0 && density.is_finite()) || !(t.cell_size > 0.0) || !(t.slice_interval > 0.0) {
        return Err(CliError::Validation("density, cell_size and slice_interval must be positive".into()));
    }

    let cloud = load(&cloud_path, "point cloud", load_point_cloud_auto)?;
    let sub = subsample_density(&cloud, density).context("subsampling cloud")?;
    log::info!("subsampled {} points to {}", cloud.len(), sub.len());
    let layers = build_tomogram(&sub, t.cell_size, t.slice_interval, &robot).context("building tomogram")?;
    let tomo = score_traversability(&layers, &robot, &weights).context("scoring traversability")?;
    let out = cfg.output_path(&a.out);
    prepare_output(&out)?;
    save_tomogram(&tomo, &out).context("writing tomogram")?;
    write_sidecar(
        &out,
        "build-tomogram",
        None,
        &[("cloud", &cloud_path)],
        serde_json::json!({
            "tomogram": cfg.tomogram,
            "robot": robot,
            "weights": weights,
            "subsampled_points": sub.len(),
            "slices": tomo.slices.len(),
            "nx": tomo.nx,
            "ny": tomo.ny,
        }),
    )
}

fn sample_sparse_cmd(a: SampleSparseArgs, mut cfg: PipelineConfig) -> CmdResult {
    if let Some(s) = a.seed {
        cfg.sampler.seed = Some(s);
    }
    let scfg = cfg.sampler()?;
    scfg.validate().map_err(invalid)?;
    let tomo = load(&a.tomogram, "tomogram", load_tomogram)?;
    let result = sample_sparse_trajectories(&tomo, &scfg).map_err(|e| CliError::Runtime(anyhow::anyhow!("sampling: {e}")))?;
    let cov = coverage(&tomo, &result.trajectories, cfg.sampler.coverage_radius);
    log::info!("{} trajectories, coverage {:.3}", result.trajectories.len(), cov);
    let out = cfg.output_path(&a.out);
    write_text(&out, &format_sparse_trajectories(&result.trajectories))?;
    let lengths: Vec<f64> = result.trajectories.iter().map(|t| t.total_length).collect();
    write_sidecar(
        &out,
        "sample-sparse",
        Some(scfg.seed),
        &[("tomogram", &a.tomogram)],
        serde_json::json!({
            "sampler": scfg,
            "representatives": result.representatives.len(),
            "subgroups": result.reports,
            "lengths": lengths,
            "coverage_radius": cfg.sampler.coverage_radius,
            "coverage": cov,
        }),
    )
}

#[derive(Serialize)]
struct DenseSidecar<'a> {
    tool: &'static str,
    version: &'static str,
    #[serde(flatten)]
    meta: &'a DenseMetadata,
}

fn densify_cmd(a: DensifyArgs, mut cfg: PipelineConfig) -> CmdResult {
    if let Some(s) = a.seed {
        cfg.motion.seed = Some(s);
    }
    if let Some(m) = &a.model {
        cfg.motion.model = m.parse().map_err(CliError::Validation)?;
    }
    let seed = cfg.motion.seed.ok_or_else(|| CliError::Validation("densify needs a seed (--seed or --motion.seed)".into()))?;
    let limits = cfg.limits();
    limits.validate().map_err(invalid)?;
    let model = cfg.motion.model;
    let records = load(&a.sparse, "sparse trajectory file", |p| {
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        parse_sparse_trajectories(&text).map_err(|e| e.to_string())
    })?;
    let groups = group_waypoints(&records);
    if groups.is_empty() {
        return Err(CliError::Validation(format!("{} holds no waypoints", a.sparse.display())));
    }
    let out = cfg.output_path(&a.out);
    prepare_dir(&out)?;

    // Each trajectory draws from its own stream, so results do not depend on scheduling.
    let results: Vec<(usize, Option<DenseMetadata>)> = groups
        .par_iter()
        .map(|(id, pts)| -> anyhow::Result<(usize, Option<DenseMetadata>)> {
            let mut rng = trajectory_rng(seed, *id as u64);
            let dense = match densify(pts, model, &limits, &DensifyOptions::default(), &mut rng) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("trajectory {id} skipped: {e}");
                    return Ok((*id, None));
                }
            };
            let path = out.join(format!("traj_{id:03}.txt"));
            save_pose_seq(&dense.poses, &path).with_context(|| format!("writing {}", path.display()))?;
            let meta = DenseMetadata { traj_id: *id, model, limits, seed, height: dense.height, poses: dense.poses.len() };
            let text = serde_json::to_string_pretty(&DenseSidecar { tool: TOOL, version: VERSION, meta: &meta })? + "\n";
            std::fs::write(sidecar_path(&path), text)?;
            Ok((*id, Some(meta)))
        })
        .collect::<anyhow::Result<_>>()?;
    let skipped: Vec<usize> = results.iter().filter(|(_, m)| m.is_none()).map(|(id, _)| *id).collect();
    if skipped.len() == results.len() {
        return Err(CliError::Runtime(anyhow::anyhow!("no trajectory could be densified")));
    }
    write_sidecar(
        &out.join("densify"),
        "densify",
        Some(seed),
        &[("sparse", &a.sparse)],
        serde_json::json!({ "model": model, "limits": limits, "trajectories": results.len() - skipped.len(), "skipped": skipped }),
    )
}

// ---------------------------------------------------------------------------
// camera views
// ---------------------------------------------------------------------------

fn resample_cmd(a: ResampleArgs, cfg: &PipelineConfig) -> CmdResult {
    let rig = load(&a.rig, "rig manifest", load_rig)?;
    let cam = load(&a.camera, "camera file", load_camera)?;
    let modality = match a.modality {
        ModalityArg::Rgb => Modality::Rgb,
        ModalityArg::Depth => Modality::Depth,
        ModalityArg::Semantic => Modality::Semantic,
    };
    let sampling = match a.sampling {
        SamplingArg::Nearest => Sampling::Nearest,
        SamplingArg::Bilinear => Sampling::Bilinear,
    };
    let img = resample_view(&rig, &cam, modality, sampling).map_err(invalid)?;
    let out = cfg.output_path(&a.out);
    prepare_output(&out)?;
    save_image_auto(&img, &out).context("writing view")?;
    write_sidecar(
        &out,
        "resample",
        None,
        &[("rig", &a.rig), ("camera", &a.camera)],
        serde_json::json!({ "modality": modality, "sampling": sampling, "depth_kind": rig.depth_kind }),
    )
}

fn lidar_cmd(a: LidarSimArgs, cfg: &PipelineConfig) -> CmdResult {
    if a.channels == 0 || a.azimuth_steps == 0 || !(a.vfov_min <= a.vfov_max) {
        return Err(CliError::Validation("need channels > 0, azimuth_steps > 0 and vfov_min <= vfov_max".into()));
    }
    let rig = load(&a.rig, "rig manifest", load_rig)?;
    let pattern =
        LidarPattern { channels: a.channels, vfov: [a.vfov_min.to_radians(), a.vfov_max.to_radians()], azimuth_steps: a.azimuth_steps };
    let cloud = lidar_from_cubemap(&rig, &pattern).map_err(invalid)?;
    let out = cfg.output_path(&a.out);
    let format = CloudFormat::from_path(&out)
        .ok_or_else(|| CliError::Validation(format!("cannot infer a cloud format from {}", out.display())))?;
    prepare_output(&out)?;
    save_point_cloud(&cloud, &out, format).context("writing scan")?;
    write_sidecar(&out, "lidar-sim", None, &[("rig", &a.rig)], serde_json::json!({ "pattern": pattern, "points": cloud.len() }))
}

// ---------------------------------------------------------------------------
// derived ground truth
// ---------------------------------------------------------------------------

fn derive_cmd(cmd: DeriveCommand, mut cfg: PipelineConfig) -> CmdResult {
    match cmd {
        DeriveCommand::Flow { depth, camera, poses, from, to, out } => {
            let d = load(&depth, "depth image", load_image)?;
            let cam = load(&camera, "camera file", load_camera)?;
            let seq = load(&poses, "pose file", load_pose_seq)?;
            let n = seq.len();
            if from >= n || to >= n {
                return Err(CliError::Validation(format!("pose indices {from}, {to} out of range for {n} poses")));
            }
            let (p0, p1) = (seq.entries()[from].isometry(), seq.entries()[to].isometry());
            let flow = flow_from_depth_poses(&d, &cam, &p0, &p1).map_err(invalid)?;
            let out = cfg.output_path(&out);
            prepare_output(&out)?;
            save_image_auto(&flow.to_image(), &out).context("writing flow")?;
            write_sidecar(
                &out,
                "derive flow",
                None,
                &[("depth", &depth), ("camera", &camera), ("poses", &poses)],
                serde_json::json!({ "from": from, "to": to }),
            )
        }
        DeriveCommand::Disparity { depth, camera, baseline, out } => {
            if let Some(b) = baseline {
                cfg.depth.baseline = b;
            }
            let d = load(&depth, "depth image", load_image)?;
            let cam = load(&camera, "camera file", load_camera)?;
            let rig = StereoRig::new(cam, cfg.depth.baseline).map_err(invalid)?;
            let disp = disparity_from_depth(&d, &rig).map_err(invalid)?;
            let out = cfg.output_path(&out);
            prepare_output(&out)?;
            save_image_auto(&disp, &out).context("writing disparity")?;
            write_sidecar(
                &out,
                "derive disparity",
                None,
                &[("depth", &depth), ("camera", &camera)],
                serde_json::json!({ "baseline": cfg.depth.baseline }),
            )
        }
        DeriveCommand::Imu { poses, out } => {
            let seq = load(&poses, "pose file", load_pose_seq)?;
            let imu = imu_from_poses(&seq, &GRAVITY).map_err(invalid)?;
            let out = cfg.output_path(&out);
            write_text(&out, &format_imu_csv(&imu))?;
            write_sidecar(&out, "derive imu", None, &[("poses", &poses)], serde_json::json!({ "gravity": [GRAVITY.x, GRAVITY.y, GRAVITY.z] }))
        }
    }
}

// ---------------------------------------------------------------------------
// occupancy
// ---------------------------------------------------------------------------

fn default_ego(cloud: &PointCloud) -> Point3<f64> {
    let (lo, hi) = cloud.bounds().expect("non-empty cloud");
    Point3::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y), lo.z)
}

fn occ_gt_cmd(a: OccGtArgs, mut cfg: PipelineConfig) -> CmdResult {
    if let Some(c) = a.cloud {
        cfg.paths.cloud = Some(c);
    }
    let cloud_path = cfg.paths.cloud.clone().ok_or_else(|| CliError::Validation("no input cloud (--cloud or --paths.cloud)".into()))?;
    let cloud = load(&cloud_path, "point cloud", load_point_cloud_auto)?;
    if cloud.is_empty() {
        return Err(CliError::Validation(format!("{} is empty", cloud_path.display())));
    }
    let g = &cfg.grid;
    let ego = g.ego.map(Point3::from).unwrap_or_else(|| default_ego(&cloud));
    let spec = GridSpec::around(ego, g.range_xy, g.z_range, g.resolution).map_err(invalid)?;
    let grid = occupancy_from_cloud(&cloud, &spec, g.min_points.max(1)).map_err(invalid)?;
    log::info!("{} occupied voxels of {}", grid.count(), spec.num_voxels());
    let out = cfg.output_path(&a.out);
    prepare_output(&out)?;
    save_occupancy(&grid, &out).context("writing occupancy")?;
    if let Some(t) = &a.text {
        write_text(&cfg.output_path(t), &format_occupancy_text(&grid))?;
    }
    write_sidecar(
        &out,
        "occ-gt",
        None,
        &[("cloud", &cloud_path)],
        serde_json::json!({ "grid": spec, "ego": [ego.x, ego.y, ego.z], "min_points": g.min_points, "occupied": grid.count() }),
    )
}

/// Convert Euclidean range to z-depth along `face`'s optical axis.
fn to_z_depth(img: &Image, cam: &PinholeCamera) -> Image {
    let z = img.as_f32().expect("validated depth");
    let data = z
        .iter()
        .enumerate()
        .map(|(idx, &r)| {
            if r.is_infinite() {
                return r;
            }
            let ray = cam.pixel_to_ray((idx % cam.width) as f64, (idx / cam.width) as f64);
            (r as f64 * ray.z / ray.norm()) as f32
        })
        .collect();
    Image::depth(cam.width, cam.height, data).expect("same size")
}

fn occ_baseline_cmd(a: OccBaselineArgs, cfg: &PipelineConfig) -> CmdResult {
    let rig = load(&a.rig, "rig manifest", load_rig)?;
    let mut views = Vec::with_capacity(6);
    for f in FACES {
        let cam = PinholeCamera::face(f, rig.size);
        let depth = rig.face(f).depth.clone().ok_or_else(|| CliError::Validation(format!("rig lacks {} depth", f.name())))?;
        let depth = match rig.depth_kind {
            DepthKind::ZDepth => depth,
            DepthKind::Range => to_z_depth(&depth, &cam),
        };
        views.push((depth, cam));
    }
    let ego = position(&a.position)?;
    let g = &cfg.grid;
    let spec = GridSpec::around(ego, g.range_xy, g.z_range, g.resolution).map_err(invalid)?;
    let body = Isometry3::from_parts(Translation3::from(ego.coords), UnitQuaternion::identity());
    let grid = occupancy_from_depth(&views, &body, &spec, cfg.depth.gradient_threshold).map_err(invalid)?;
    let out = cfg.output_path(&a.out);
    prepare_output(&out)?;
    save_occupancy(&grid, &out).context("writing occupancy")?;
    write_sidecar(
        &out,
        "occ-baseline",
        None,
        &[("rig", &a.rig)],
        serde_json::json!({ "grid": spec, "gradient_threshold": cfg.depth.gradient_threshold, "occupied": grid.count() }),
    )
}

fn eval_occ_cmd(a: EvalOccArgs, cfg: &PipelineConfig) -> CmdResult {
    let pred = load(&a.pred, "predicted occupancy", load_occupancy)?;
    let gt = load(&a.gt, "ground-truth occupancy", load_occupancy)?;
    let g = &cfg.grid;
    let ego = g.ego.map(Point3::from).unwrap_or_else(|| {
        // Centre of the ground-truth grid footprint at the height it was built around.
        let s = &gt.spec;
        let half = Vector3::new(s.dims[0] as f64, s.dims[1] as f64, 0.0) * (0.5 * s.resolution);
        Point3::new(s.origin.x + half.x, s.origin.y + half.y, s.origin.z - g.z_range[0])
    });
    let window = EvalWindow { ego, range_xy: g.range_xy, z_range: g.z_range };
    let report = occupancy_iou(&pred, &gt, &window).map_err(invalid)?;
    println!("iou={}", report.iou);
    println!("intersection={}", report.intersection);
    println!("union={}", report.union);
    for (label, iou) in &report.per_class {
        println!("iou_class_{label}={iou}");
    }
    if let Some(out) = &a.out {
        let out = cfg.output_path(out);
        let text = serde_json::to_string_pretty(&serde_json::json!({ "window": window, "report": report })).context("serialising report")?;
        write_text(&out, &(text + "\n"))?;
        write_sidecar(&out, "eval-occ", None, &[("pred", &a.pred), ("gt", &a.gt)], serde_json::json!({ "window": window }))?;
    }
    Ok(())
}

fn eval_slam_cmd(a: EvalSlamArgs, cfg: &PipelineConfig) -> CmdResult {
    let gt = load(&a.gt, "ground-truth poses", load_pose_seq)?;
    let est = load(&a.est, "estimated poses", load_pose_seq)?;
    let scfg = cfg.slam();
    let (report, _) = evaluate(&gt, &est, &scfg).map_err(invalid)?;
    let table = format_report_table(&report);
    print!("{table}");
    if let Some(prefix) = &a.out {
        let prefix = cfg.output_path(prefix);
        let with_ext = |ext: &str| {
            let mut s = prefix.clone().into_os_string();
            s.push(ext);
            PathBuf::from(s)
        };
        write_text(&with_ext(".txt"), &table)?;
        let kv = with_ext(".kv");
        write_text(&kv, &format_report_kv(&report))?;
        write_sidecar(&kv, "eval-slam", None, &[("gt", &a.gt), ("est", &a.est)], serde_json::json!({ "slam": scfg }))?;
    }
    Ok(())
}

fn verify_cmd(a: VerifyArgs, cfg: &PipelineConfig) -> CmdResult {
    require_file(&a.dir, "frame directory")?;
    let vcfg = cfg.verify();
    let rows = verify_directory(&a.dir, &vcfg).map_err(invalid)?;
    let csv = format_checks_csv(&rows);
    let suspects = rows.iter().filter(|r| r.photometric.is_some_and(|p| p.sync_suspect)).count();
    let collisions = rows.iter().filter(|r| r.collision.collision).count();
    eprintln!("{} frame pairs, {suspects} sync suspects, {collisions} collisions", rows.len());
    match &a.out {
        Some(out) => {
            let out = cfg.output_path(out);
            write_text(&out, &csv)?;
            write_sidecar(&out, "verify", None, &[("dir", &a.dir)], serde_json::json!({ "verify": vcfg }))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
