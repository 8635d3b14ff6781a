//! Target position estimation from a tightly cropped target cloud.
//!
//! One pose sample runs: two-means split into plates, RANSAC per plate,
//! total-least-squares refit of each inlier set, and a perpendicularity gate
//! against the ground. A gate failure restarts the sample from the split
//! with a fresh derived seed. The sample is the point on the plates'
//! intersection line at the mean height of both inlier sets. The final
//! estimate averages many independent samples.

mod kmeans;
mod plane;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PlaneModel, Point3, PointCloud};
use crate::seed::{self, tag};

pub(crate) use plane::best_consensus;
pub use plane::{intersect_planes, perpendicularity_gate, svd_plane, GateReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("too few points: need at least {needed}, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("degenerate clustering: cluster sizes {sizes:?}")]
    DegenerateCluster { sizes: [usize; 2] },
    #[error("no plane consensus: best hypothesis has {best} inliers, need {needed}")]
    NoConsensus { best: usize, needed: usize },
    #[error("points are collinear or coincident; no plane through them")]
    DegeneratePlane,
    #[error("planes are nearly parallel; no intersection line")]
    NearParallel,
    #[error(
        "perpendicularity gate never passed in {attempts} attempts \
         (last angles: plates {:.3}°, ground {:.3}°/{:.3}°)",
        last.plates_angle, last.first_ground_angle, last.second_ground_angle
    )]
    RetriesExhausted { attempts: usize, last: GateReport },
    #[error("sample {index} failed: {source}")]
    SampleFailure {
        index: usize,
        #[source]
        source: Box<EstimationError>,
    },
    #[error("invalid estimation config: {key} {reason}")]
    InvalidConfig { key: &'static str, reason: String },
}

impl EstimationError {
    /// Variant name, used as a stable diagnostic code.
    pub fn name(&self) -> &'static str {
        match self {
            Self::TooFewPoints { .. } => "TooFewPoints",
            Self::DegenerateCluster { .. } => "DegenerateCluster",
            Self::NoConsensus { .. } => "NoConsensus",
            Self::DegeneratePlane => "DegeneratePlane",
            Self::NearParallel => "NearParallel",
            Self::RetriesExhausted { .. } => "RetriesExhausted",
            Self::SampleFailure { source, .. } => source.name(),
            Self::InvalidConfig { .. } => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    /// Meters.
    pub ransac_inlier_threshold: f64,
    pub ransac_iterations: usize,
    /// Degrees.
    pub perpendicularity_tolerance: f64,
    pub sample_count: usize,
    pub max_retries_per_sample: usize,
    pub min_points_per_cluster: usize,
    pub kmeans_max_iterations: usize,
    /// Meters of centroid movement.
    pub kmeans_tolerance: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            ransac_inlier_threshold: 0.03,
            ransac_iterations: 1000,
            perpendicularity_tolerance: 1.0,
            sample_count: 100,
            max_retries_per_sample: 50,
            min_points_per_cluster: 20,
            kmeans_max_iterations: 100,
            kmeans_tolerance: 1e-6,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        let positive = |key, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(EstimationError::InvalidConfig { key, reason: format!("must be a positive number, got {v}") })
            }
        };
        positive("ransac_inlier_threshold", self.ransac_inlier_threshold)?;
        positive("perpendicularity_tolerance", self.perpendicularity_tolerance)?;
        positive("kmeans_tolerance", self.kmeans_tolerance)?;
        for (key, v) in [
            ("sample_count", self.sample_count),
            ("ransac_iterations", self.ransac_iterations),
            ("kmeans_max_iterations", self.kmeans_max_iterations),
        ] {
            if v == 0 {
                return Err(EstimationError::InvalidConfig { key, reason: "must be at least 1".into() });
            }
        }
        Ok(())
    }
}

/// Splits a target cloud into two clusters, returned in lexicographic
/// centroid order with the input order preserved inside each.
pub fn kmeans2(
    cloud: &PointCloud,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<(PointCloud, PointCloud), EstimationError> {
    let split = kmeans::two_means(
        &cloud.points,
        cfg.min_points_per_cluster,
        cfg.kmeans_max_iterations,
        cfg.kmeans_tolerance,
        &mut seed::rng(seed),
    )?;
    let (second, first): (Vec<_>, Vec<_>) = cloud.points.iter().zip(&split.second).partition(|(_, &m)| m);
    let unzip = |v: Vec<(&Point3, &bool)>| cloud.with_points(v.into_iter().map(|(p, _)| *p).collect());
    Ok((unzip(first), unzip(second)))
}

/// RANSAC plane fit with the configured threshold and iteration count.
/// Returns the inliers (input order) and the winning hypothesis.
pub fn ransac_plane(
    cloud: &PointCloud,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<(PointCloud, PlaneModel), EstimationError> {
    let (inliers, model) = plane::ransac_fit(
        &cloud.points,
        cfg.ransac_iterations,
        cfg.ransac_inlier_threshold,
        cfg.min_points_per_cluster,
        &mut seed::rng(seed),
    )?;
    Ok((cloud.with_points(inliers), model))
}

/// One accepted pose sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub position: Point3,
    pub plane_pair: [PlaneModel; 2],
    pub gate: GateReport,
    pub retries: usize,
}

enum Attempt {
    Accepted(PoseSample),
    Rejected(GateReport),
}

fn attempt(
    tight: &PointCloud,
    ground: &PlaneModel,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<Attempt, EstimationError> {
    let (mut first, mut second) = kmeans2(tight, seed::derive(seed, tag::KMEANS, 0), cfg)?;
    // Seed RANSAC by which cluster holds the first input point rather than by
    // lexicographic order, which a rotation of the map would change.
    if second.points.first() == tight.points.first() {
        std::mem::swap(&mut first, &mut second);
    }
    let (first_inliers, _) = ransac_plane(&first, seed::derive(seed, tag::RANSAC, 0), cfg)?;
    let (second_inliers, _) = ransac_plane(&second, seed::derive(seed, tag::RANSAC, 1), cfg)?;
    let p1 = svd_plane(&first_inliers.points)?;
    let p2 = svd_plane(&second_inliers.points)?;

    let gate = perpendicularity_gate(&p1, &p2, ground, cfg.perpendicularity_tolerance);
    if !gate.passed {
        return Ok(Attempt::Rejected(gate));
    }
    let line = intersect_planes(&p1, &p2)?;
    let count = first_inliers.len() + second_inliers.len();
    let mean_z = first_inliers.iter().chain(second_inliers.iter()).map(|p| p.z).sum::<f64>() / count as f64;
    // The gate keeps the line within the tolerance of vertical.
    let position = line.point_at_height(mean_z).ok_or(EstimationError::NearParallel)?;
    Ok(Attempt::Accepted(PoseSample { position, plane_pair: [p1, p2], gate, retries: 0 }))
}

/// Draws one pose sample, retrying from the clustering step on gate failure
/// up to `max_retries_per_sample` times.
pub fn sample_target_pose(
    tight: &PointCloud,
    ground: &PlaneModel,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<PoseSample, EstimationError> {
    let attempts = cfg.max_retries_per_sample + 1;
    let mut last_gate = None;
    let mut last_error = None;
    for retry in 0..attempts {
        match attempt(tight, ground, seed::derive(seed, tag::ATTEMPT, retry as u64), cfg) {
            Ok(Attempt::Accepted(sample)) => return Ok(PoseSample { retries: retry, ..sample }),
            Ok(Attempt::Rejected(gate)) => last_gate = Some(gate),
            Err(e) => last_error = Some(e),
        }
    }
    match (last_gate, last_error) {
        (Some(last), _) => Err(EstimationError::RetriesExhausted { attempts, last }),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one attempt runs"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub target_id: String,
    /// Mean of `sample_positions`, map frame.
    pub position: Point3,
    pub sample_positions: Vec<Point3>,
    /// Per-axis population standard deviation of the samples.
    pub sample_spread: Point3,
    /// Plate planes of the last sample.
    pub plane_pair: [PlaneModel; 2],
    pub retries_used: usize,
}

/// Runs `sample_count` independent pose samples (in parallel, seeded by
/// sample index) and averages them.
pub fn estimate_target(
    tight: &PointCloud,
    ground: &PlaneModel,
    target_id: &str,
    seed: u64,
    cfg: &EstimationConfig,
) -> Result<TargetEstimate, EstimationError> {
    cfg.validate()?;
    let samples: Vec<Result<PoseSample, EstimationError>> = (0..cfg.sample_count)
        .into_par_iter()
        .map(|i| sample_target_pose(tight, ground, seed::derive(seed, tag::SAMPLE, i as u64), cfg))
        .collect();

    let mut accepted = Vec::with_capacity(samples.len());
    for (index, s) in samples.into_iter().enumerate() {
        match s {
            Ok(s) => accepted.push(s),
            Err(e) => return Err(EstimationError::SampleFailure { index, source: Box::new(e) }),
        }
    }

    let positions: Vec<Point3> = accepted.iter().map(|s| s.position).collect();
    let n = positions.len() as f64;
    let mean = |f: fn(&Point3) -> f64| positions.iter().map(f).sum::<f64>() / n;
    let position = Point3::new(mean(|p| p.x), mean(|p| p.y), mean(|p| p.z));
    let spread = |f: fn(&Point3) -> f64, m: f64| (positions.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / n).sqrt();
    let sample_spread =
        Point3::new(spread(|p| p.x, position.x), spread(|p| p.y, position.y), spread(|p| p.z, position.z));
    let last = accepted.last().expect("sample_count >= 1");
    Ok(TargetEstimate {
        target_id: target_id.to_string(),
        position,
        plane_pair: last.plane_pair,
        retries_used: accepted.iter().map(|s| s.retries).sum(),
        sample_positions: positions,
        sample_spread,
    })
}
