//! Pipeline configuration: one TOML document with a section per stage.
//!
//! Every key can be overridden on the command line as `--section.key value`
//! (or `--section.key=value`). Values are parsed as TOML literals and fall
//! back to plain strings, so `--paths.output out` and `--grid.z_range [-2,8]`
//! both work.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tgf_core::dense::{MotionLimits, MotionModel};
use tgf_core::planner::PlannerConfig;
use tgf_core::sampler::SamplerConfig;
use tgf_core::slam_eval::SlamEvalConfig;
use tgf_core::tomogram::CostWeights;
use tgf_core::verify::VerifyConfig;
use tgf_core::RobotSpec;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Environment point cloud.
    pub cloud: Option<PathBuf>,
    /// Directory that relative output names resolve against.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomogramSection {
    /// Subsampling density, points per cubic meter. Required by build-tomogram.
    pub density: Option<f64>,
    pub cell_size: f64,
    pub slice_interval: f64,
    pub slope_weight: f64,
    pub step_weight: f64,
}

impl Default for TomogramSection {
    fn default() -> Self {
        let w = CostWeights::default();
        Self { density: None, cell_size: 0.2, slice_interval: 1.0, slope_weight: w.slope, step_weight: w.step }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSection {
    pub max_slope: f64,
    pub max_step: f64,
    pub min_clearance: f64,
    pub radius: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        let r = RobotSpec::default();
        Self { max_slope: r.max_slope, max_step: r.max_step, min_clearance: r.min_clearance, radius: r.radius }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub seed: Option<u64>,
    /// Weight of traversability cost against distance in the planner.
    pub cost_weight: f64,
    /// Radius of the reported coverage metric, meters.
    pub coverage_radius: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { n: 200, k: 20, s: 2, seed: None, cost_weight: PlannerConfig::default().cost_weight, coverage_radius: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSection {
    pub model: MotionModel,
    pub seed: Option<u64>,
    pub v_min: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub yaw_rate_max: f64,
    pub lookahead: f64,
    pub height_range: [f64; 2],
    pub noise_sigma: f64,
    pub dt: f64,
    pub align_threshold: f64,
}

impl Default for MotionSection {
    fn default() -> Self {
        let l = MotionLimits::default();
        Self {
            model: MotionModel::Omnidirectional,
            seed: None,
            v_min: l.v_min,
            v_max: l.v_max,
            a_max: l.a_max,
            yaw_rate_max: l.yaw_rate_max,
            lookahead: l.lookahead,
            height_range: l.height_range,
            noise_sigma: l.noise_sigma,
            dt: l.dt,
            align_threshold: l.align_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub resolution: f64,
    pub range_xy: f64,
    /// z limits relative to the ego height.
    pub z_range: [f64; 2],
    pub min_points: usize,
    /// Grid and evaluation centre; defaults to the cloud's footprint centre at its lowest point.
    pub ego: Option<[f64; 3]>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { resolution: 0.5, range_xy: 25.0, z_range: [-2.0, 8.0], min_points: 1, ego: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthSection {
    /// Relative depth jump rejected by the gradient filter.
    pub gradient_threshold: f64,
    /// Stereo baseline, meters.
    pub baseline: f64,
}

impl Default for DepthSection {
    fn default() -> Self {
        Self { gradient_threshold: 0.1, baseline: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub threshold: f64,
    pub min_valid_fraction: f64,
    pub clearance: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        let v = VerifyConfig::default();
        Self { threshold: v.threshold, min_valid_fraction: v.min_valid_fraction, clearance: v.clearance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlamSection {
    pub max_gap: usize,
    pub scale_align: bool,
}

impl Default for SlamSection {
    fn default() -> Self {
        let s = SlamEvalConfig::default();
        Self { max_gap: s.max_gap, scale_align: s.scale_align }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeSection {
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsSection,
    pub tomogram: TomogramSection,
    pub robot: RobotSection,
    pub sampler: SamplerSection,
    pub motion: MotionSection,
    pub grid: GridSection,
    pub depth: DepthSection,
    pub verify: VerifySection,
    pub slam: SlamSection,
    pub runtime: RuntimeSection,
}

/// `(section.key, raw value)` pairs taken from the command line.
pub type Overrides = Vec<(String, String)>;

/// Split `--section.key value` / `--section.key=value` pairs out of `args`.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !name.contains('.') {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| CliError::Validation(format!("flag --{name} needs a value")))?,
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl PipelineConfig {
    /// Read `path` (if any), apply overrides, and check for unknown keys.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (name, raw) in overrides {
            let (section, key) = name.split_once('.').expect("override names contain a dot");
            if key.is_empty() || key.contains('.') {
                return Err(CliError::Validation(format!("flag --{name} must look like --section.key")));
            }
            let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
            let toml::Value::Table(t) = entry else {
                return Err(CliError::Validation(format!("config entry {section:?} is not a section")));
            };
            t.insert(key.to_string(), parse_value(raw));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("invalid configuration: {}", e.message())))
    }

    pub fn robot(&self) -> RobotSpec {
        let r = &self.robot;
        RobotSpec { max_slope: r.max_slope, max_step: r.max_step, min_clearance: r.min_clearance, radius: r.radius }
    }

    pub fn weights(&self) -> CostWeights {
        CostWeights { slope: self.tomogram.slope_weight, step: self.tomogram.step_weight }
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig { cost_weight: self.sampler.cost_weight, max_step: self.robot.max_step }
    }

    /// Sampler settings; the seed is mandatory.
    pub fn sampler(&self) -> Result<SamplerConfig, CliError> {
        let s = &self.sampler;
        let seed = s.seed.ok_or_else(|| CliError::Validation("sample-sparse needs a seed (--seed or --sampler.seed)".into()))?;
        Ok(SamplerConfig { n: s.n, k: s.k, s: s.s, seed, planner: self.planner() })
    }

    pub fn limits(&self) -> MotionLimits {
        let m = &self.motion;
        MotionLimits {
            v_min: m.v_min,
            v_max: m.v_max,
            a_max: m.a_max,
            yaw_rate_max: m.yaw_rate_max,
            lookahead: m.lookahead,
            height_range: m.height_range,
            noise_sigma: m.noise_sigma,
            dt: m.dt,
            align_threshold: m.align_threshold,
        }
    }

    pub fn verify(&self) -> VerifyConfig {
        let v = &self.verify;
        VerifyConfig { threshold: v.threshold, min_valid_fraction: v.min_valid_fraction, clearance: v.clearance }
    }

    pub fn slam(&self) -> SlamEvalConfig {
        SlamEvalConfig { max_gap: self.slam.max_gap, scale_align: self.slam.scale_align }
    }

    /// Resolve an output name against `paths.output`.
    pub fn output_path(&self, p: &Path) -> PathBuf {
        match &self.paths.output {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}
