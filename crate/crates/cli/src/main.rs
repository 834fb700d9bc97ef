//! `tgf`: subcommand front-end for tomogram construction, trajectory
//! sampling, view resampling, ground-truth derivation and evaluation.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, config or
//! inputs), 2 on runtime failures.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{extract_overrides, PipelineConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or inputs.
    Validation(String),
    /// Failure while processing valid inputs.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tgf",
    version,
    about = "Traversability tomograms, coverage trajectories and ground-truth generation",
    after_help = "Any configuration key can be overridden with --section.key VALUE, e.g. --sampler.seed 7."
)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; falls back to runtime.threads, then TGF_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate bundled synthetic environments and renders.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Subsample a point cloud and build a scored tomogram.
    BuildTomogram(BuildTomogramArgs),
    /// Sample sparse coverage trajectories from a tomogram.
    SampleSparse(SampleSparseArgs),
    /// Turn sparse trajectories into dense 6-DoF pose sequences.
    Densify(DensifyArgs),
    /// Render a pinhole view from a cubemap rig.
    Resample(ResampleArgs),
    /// Simulate a spinning LiDAR from cubemap depth.
    LidarSim(LidarSimArgs),
    /// Derive flow, disparity or IMU ground truth.
    #[command(subcommand)]
    Derive(DeriveCommand),
    /// Ground-truth semantic occupancy from a labelled cloud.
    OccGt(OccGtArgs),
    /// Occupancy baseline from cubemap depth with gradient filtering.
    OccBaseline(OccBaselineArgs),
    /// IoU of a predicted occupancy grid against ground truth.
    EvalOcc(EvalOccArgs),
    /// Relative translation and rotation errors of an estimated trajectory.
    EvalSlam(EvalSlamArgs),
    /// Photometric synchronisation and collision checks on a frame directory.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CloudScene {
    Room,
    Ramp,
    Stairs,
    TwoFloor,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RenderScene {
    Sphere,
    Cylinder,
    PlaneWall,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Labelled point cloud of a procedural environment.
    Cloud {
        #[arg(long, value_enum)]
        scene: CloudScene,
        /// Point spacing, meters.
        #[arg(long, default_value_t = 0.1)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cubemap rig rendered from an analytic scene.
    Rig {
        #[arg(long, value_enum)]
        scene: RenderScene,
        /// Sphere/cylinder radius or wall distance, meters.
        #[arg(long, default_value_t = 5.0)]
        extent: f64,
        /// Face resolution, pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Body position `x,y,z`.
        #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true, default_values_t = [0.0, 0.0, 0.0])]
        position: Vec<f64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pinhole frames at each pose of a trajectory, in the layout `verify` reads.
    Frames {
        #[arg(long, value_enum)]
        scene: RenderScene,
        #[arg(long, default_value_t = 5.0)]
        extent: f64,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct BuildTomogramArgs {
    /// Input cloud (overrides paths.cloud).
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Points per cubic meter (overrides tomogram.density).
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SampleSparseArgs {
    #[arg(long)]
    tomogram: PathBuf,
    /// Overrides sampler.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DensifyArgs {
    /// Sparse trajectory file.
    #[arg(long)]
    sparse: PathBuf,
    /// Overrides motion.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides motion.model (`omni` or `diff`).
    #[arg(long)]
    model: Option<String>,
    /// Output directory; one pose file per trajectory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModalityArg {
    Rgb,
    Depth,
    Semantic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplingArg {
    Nearest,
    Bilinear,
}

#[derive(Debug, Args)]
struct ResampleArgs {
    /// Rig manifest.
    #[arg(long)]
    rig: PathBuf,
    /// Target camera file.
    #[arg(long)]
    camera: PathBuf,
    #[arg(long, value_enum)]
    modality: ModalityArg,
    #[arg(long, value_enum, default_value = "bilinear")]
    sampling: SamplingArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LidarSimArgs {
    #[arg(long)]
    rig: PathBuf,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    /// Lowest beam elevation, degrees.
    #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
    vfov_min: f64,
    /// Highest beam elevation, degrees.
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    vfov_max: f64,
    #[arg(long, default_value_t = 1024)]
    azimuth_steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum DeriveCommand {
    /// Optical flow from depth at one pose towards another.
    Flow {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        /// Index of the pose the depth was captured at.
        #[arg(long, default_value_t = 0)]
        from: usize,
        #[arg(long, default_value_t = 1)]
        to: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stereo disparity from depth.
    Disparity {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        /// Overrides depth.baseline.
        #[arg(long)]
        baseline: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ideal IMU readings from a uniformly timed pose sequence.
    Imu {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct OccGtArgs {
    /// Labelled cloud (overrides paths.cloud).
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the `i j k label` text form.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OccBaselineArgs {
    #[arg(long)]
    rig: PathBuf,
    /// Body position `x,y,z` in the world.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true, default_values_t = [0.0, 0.0, 0.0])]
    position: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalOccArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalSlamArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    est: PathBuf,
    /// Report prefix; writes `<prefix>.txt` and `<prefix>.kv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Frame directory with poses.txt, camera.toml, image_*.ppm and depth_*.pfm.
    #[arg(long)]
    dir: PathBuf,
    /// CSV report; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads(cli: Option<usize>, cfg: &PipelineConfig) -> Result<(), CliError> {
    let env = match std::env::var("TGF_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::Validation(format!("TGF_THREADS={v:?} is not a thread count")))?),
        Err(_) => None,
    };
    let Some(n) = cli.or(cfg.runtime.threads).or(env) else {
        return Ok(());
    };
    if n == 0 {
        return Err(CliError::Validation("thread count must be at least 1".into()));
    }
    log::info!("using {n} worker threads");
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("thread pool: {e}")))
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let (args, overrides) = extract_overrides(args)?;
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return Ok(());
            }
            let msg = e.render().to_string();
            let msg = msg.trim_end().strip_prefix("error: ").unwrap_or(msg.trim_end());
            return Err(CliError::Validation(msg.to_string()));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    init_threads(cli.threads, &cfg)?;
    commands::dispatch(cli.command, cfg)
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
