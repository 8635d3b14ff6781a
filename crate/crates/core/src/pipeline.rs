//! End-to-end evaluation run: per-target crop and estimation, then
//! registration and metrics over every target that succeeded.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crop::{loose_crop, remove_ground, CropConfig, CropError};
use crate::estimation::{estimate_target, EstimationConfig, EstimationError, TargetEstimate};
use crate::geometry::{PlaneModel, PointCloud};
use crate::io::{read_gps_poses, read_pcd, GpsCsvError, GpsTargetPose, PcdError};
use crate::metrics::{evaluate, DimensionMode, EvaluationReport, MetricsError};
use crate::registration::RegistrationMode;
use crate::seed::{self, tag};

/// Flat run configuration, one JSON object. Crop and estimation keys sit at
/// the top level alongside the input paths.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub map_path: Option<PathBuf>,
    pub gps_path: Option<PathBuf>,
    /// Directory of `<target_id>.pcd` tight crops, used instead of `map_path`.
    pub pre_cropped_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub crop: CropConfig,
    #[serde(flatten)]
    pub estimation: EstimationConfig,
    pub registration_mode: RegistrationMode,
    pub dimension_mode: DimensionMode,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

/// Rejects keys not present in `known` so typos do not silently fall back to
/// defaults.
pub fn check_keys(value: &serde_json::Value, known: &serde_json::Value) -> Result<(), ConfigError> {
    let (Some(given), Some(known)) = (value.as_object(), known.as_object()) else {
        return Err(ConfigError::Invalid { key: "<root>".into(), reason: "config must be a JSON object".into() });
    };
    match given.keys().find(|k| !known.contains_key(*k)) {
        Some(k) => Err(ConfigError::UnknownKey(k.clone())),
        None => Ok(()),
    }
}

fn keyed(e: serde_json::Error) -> ConfigError {
    // serde_json names the offending field in its message for type errors.
    ConfigError::Invalid { key: "<value>".into(), reason: e.to_string() }
}

impl RunConfig {
    /// Parses a config document. Relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        check_keys(&value, &serde_json::to_value(RunConfig::default())?)?;
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(keyed)?;
        if let Some(base) = base_dir {
            for p in [&mut cfg.map_path, &mut cfg.gps_path, &mut cfg.pre_cropped_dir].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_json(&text, path.parent())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::Invalid { key: key.to_string(), reason };
        self.crop.validate().map_err(|e| match e {
            CropError::InvalidConfig { key, reason } => invalid(key, reason),
            other => invalid("crop", other.to_string()),
        })?;
        self.estimation.validate().map_err(|e| match e {
            EstimationError::InvalidConfig { key, reason } => invalid(key, reason),
            other => invalid("estimation", other.to_string()),
        })?;
        if self.gps_path.is_none() {
            return Err(invalid("gps_path", "is required".into()));
        }
        match (&self.map_path, &self.pre_cropped_dir) {
            (Some(_), Some(_)) => {
                Err(invalid("pre_cropped_dir", "cannot be combined with map_path; choose one input".into()))
            }
            (None, None) => Err(invalid("map_path", "is required unless pre_cropped_dir is set".into())),
            _ => Ok(()),
        }
    }
}

/// Input or configuration problems: nothing was evaluated.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("ground truth: {0}")]
    GroundTruth(#[from] GpsCsvError),
    #[error("pointcloud: {0}")]
    Pointcloud(#[from] PcdError),
    #[error("TooFewTargets: ground truth lists {0} target(s); at least 2 are needed")]
    TooFewTargets(usize),
}

/// Pipeline stage at which a target failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Crop,
    GroundRemoval,
    Estimation,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetFailure {
    pub target_id: String,
    pub stage: Stage,
    /// Error variant name.
    pub code: String,
    pub message: String,
}

impl TargetFailure {
    fn crop(id: &str, stage: Stage, e: &CropError) -> Self {
        let code = match e {
            CropError::EmptyCrop { .. } => "EmptyCrop",
            CropError::NoGroundFound { .. } => "NoGroundFound",
            CropError::EmptyAfterRemoval => "EmptyAfterRemoval",
            CropError::InvalidConfig { .. } => "InvalidConfig",
        };
        Self { target_id: id.to_string(), stage, code: code.into(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub config: RunConfig,
    /// Successful estimates in target-id order.
    pub estimates: Vec<TargetEstimate>,
    pub ground_truth: Vec<GpsTargetPose>,
    pub failures: Vec<TargetFailure>,
    /// Present when at least two targets were estimated.
    pub report: Option<EvaluationReport>,
}

impl RunOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.report.is_some()
    }
}

/// Per-target seed, fixed by position in id order.
pub fn target_seed(run_seed: u64, index: usize) -> u64 {
    seed::derive(run_seed, tag::TARGET, index as u64)
}

/// Tight crop and ground plane for one target of a full map.
pub fn tight_crop(
    map: &PointCloud,
    gps: &GpsTargetPose,
    crop: &CropConfig,
    seed: u64,
) -> Result<(PointCloud, PointCloud, PlaneModel), TargetFailure> {
    let loose = loose_crop(map, &gps.position, crop.loose_radius)
        .map_err(|e| TargetFailure::crop(&gps.target_id, Stage::Crop, &e))?;
    let (tight, ground) =
        remove_ground(&loose, crop, seed).map_err(|e| TargetFailure::crop(&gps.target_id, Stage::GroundRemoval, &e))?;
    Ok((loose, tight, ground))
}

pub fn run_evaluation(config: &RunConfig) -> Result<RunOutcome, RunError> {
    config.validate()?;
    let gps_path = config.gps_path.as_ref().expect("validated");
    let gps = read_gps_poses(gps_path)?;
    if gps.len() < 2 {
        return Err(RunError::TooFewTargets(gps.len()));
    }
    match (&config.map_path, &config.pre_cropped_dir) {
        (Some(p), _) => {
            let map = read_pcd(p)?.cloud;
            Ok(run_on_map(config, &map, &gps))
        }
        (None, Some(dir)) => run_targets(config, &gps, |target, _| {
            let cloud = read_pcd(dir.join(format!("{}.pcd", target.target_id)))?.cloud;
            Ok(Ok((cloud, PlaneModel::ground())))
        }),
        (None, None) => unreachable!("validated"),
    }
}

/// Runs the pipeline on an in-memory map. Input paths in `config` are
/// ignored.
pub fn run_on_map(config: &RunConfig, map: &PointCloud, gps: &[GpsTargetPose]) -> RunOutcome {
    run_targets(config, gps, |target, seed| Ok(tight_crop(map, target, &config.crop, seed).map(|(_, t, g)| (t, g))))
        .expect("map source has no input errors")
}

/// Tight cloud and ground plane for one target, or why it has none.
type TightResult = Result<(PointCloud, PlaneModel), TargetFailure>;

fn run_targets(
    config: &RunConfig,
    gps: &[GpsTargetPose],
    mut source: impl FnMut(&GpsTargetPose, u64) -> Result<TightResult, RunError>,
) -> Result<RunOutcome, RunError> {
    let mut gps = gps.to_vec();
    gps.sort_by(|a, b| a.target_id.cmp(&b.target_id));

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (index, target) in gps.iter().enumerate() {
        let seed = target_seed(config.seed, index);
        let (tight, ground) = match source(target, seed)? {
            Ok(v) => v,
            Err(f) => {
                failures.push(f);
                continue;
            }
        };
        match estimate_target(&tight, &ground, &target.target_id, seed, &config.estimation) {
            Ok(e) => estimates.push(e),
            Err(e) => failures.push(TargetFailure {
                target_id: target.target_id.clone(),
                stage: Stage::Estimation,
                code: e.name().into(),
                message: e.to_string(),
            }),
        }
    }

    let report = if estimates.len() >= 2 {
        let ok: BTreeSet<&str> = estimates.iter().map(|e| e.target_id.as_str()).collect();
        let matched: Vec<GpsTargetPose> = gps.iter().filter(|g| ok.contains(g.target_id.as_str())).cloned().collect();
        match evaluate(&estimates, &matched, config.registration_mode, config.dimension_mode) {
            Ok(r) => Some(r),
            Err(e) => {
                failures.push(TargetFailure {
                    target_id: String::new(),
                    stage: Stage::Evaluation,
                    code: metrics_code(&e).into(),
                    message: e.to_string(),
                });
                None
            }
        }
    } else {
        None
    };

    Ok(RunOutcome { config: config.clone(), estimates, ground_truth: gps, failures, report })
}

fn metrics_code(e: &MetricsError) -> &'static str {
    match e {
        MetricsError::TooFewTargets { .. } => "TooFewTargets",
        MetricsError::DuplicateTargetId(_) => "DuplicateTargetId",
        MetricsError::IdMismatch { .. } => "IdMismatch",
        MetricsError::Registration(crate::registration::RegistrationError::TooFewPairs(_)) => "TooFewPairs",
        MetricsError::Registration(_) => "DegenerateConfiguration",
    }
}
