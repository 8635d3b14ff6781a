//! Reduce a full map to one target: a sphere crop around the GPS position
//! followed by automatic ground removal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{best_consensus, svd_plane};
use crate::geometry::{PlaneModel, Point3, PointCloud};
use crate::seed;

/// Hypotheses tried when searching for the ground plane.
const GROUND_RANSAC_ITERATIONS: usize = 500;
/// Ground normals must lie within this angle of +z.
const MAX_GROUND_TILT_DEG: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CropError {
    #[error("no map points within {radius} m of {center}")]
    EmptyCrop { center: Point3, radius: f64 },
    #[error("no ground plane: best candidate holds {fraction:.3} of points, need {required:.3}")]
    NoGroundFound { fraction: f64, required: f64 },
    #[error("no points remain above the ground plane")]
    EmptyAfterRemoval,
    #[error("invalid crop config: {key} {reason}")]
    InvalidConfig { key: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CropConfig {
    /// Meters.
    pub loose_radius: f64,
    /// Meters.
    pub ground_inlier_threshold: f64,
    /// Fraction of the crop the ground plane must explain.
    pub ground_min_inlier_fraction: f64,
    /// Meters above the ground plane still counted as ground.
    pub above_ground_clearance: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            loose_radius: 5.0,
            ground_inlier_threshold: 0.05,
            ground_min_inlier_fraction: 0.2,
            above_ground_clearance: 0.05,
        }
    }
}

impl CropConfig {
    pub fn validate(&self) -> Result<(), CropError> {
        for (key, v) in [
            ("loose_radius", self.loose_radius),
            ("ground_inlier_threshold", self.ground_inlier_threshold),
            ("above_ground_clearance", self.above_ground_clearance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CropError::InvalidConfig { key, reason: format!("must be a positive number, got {v}") });
            }
        }
        let f = self.ground_min_inlier_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CropError::InvalidConfig {
                key: "ground_min_inlier_fraction",
                reason: format!("must lie in (0, 1), got {f}"),
            });
        }
        Ok(())
    }
}

/// Points within `radius` of `center` (closed ball), in map order.
pub fn loose_crop(map: &PointCloud, center: &Point3, radius: f64) -> Result<PointCloud, CropError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(CropError::InvalidConfig {
            key: "loose_radius",
            reason: format!("must be a positive number, got {radius}"),
        });
    }
    let c = center.to_vector();
    let points: Vec<Point3> = map.iter().copied().filter(|p| (p.to_vector() - c).norm() <= radius).collect();
    if points.is_empty() {
        return Err(CropError::EmptyCrop { center: *center, radius });
    }
    Ok(map.with_points(points))
}

/// Fits the ground with RANSAC (normals within 30° of +z), refines it by a
/// least-squares fit to the consensus set, and drops every point at most
/// `above_ground_clearance` above it.
pub fn remove_ground(cloud: &PointCloud, cfg: &CropConfig, seed: u64) -> Result<(PointCloud, PlaneModel), CropError> {
    cfg.validate()?;
    let required = cfg.ground_min_inlier_fraction;
    let n = cloud.len();
    let min_cos = MAX_GROUND_TILT_DEG.to_radians().cos();
    let upright = |p: &PlaneModel| p.normal().z >= min_cos;

    let mut rng = seed::rng(seed::derive(seed, seed::tag::GROUND, 0));
    let consensus =
        best_consensus(&cloud.points, GROUND_RANSAC_ITERATIONS, cfg.ground_inlier_threshold, &mut rng, upright);
    let Some(consensus) = consensus else {
        return Err(CropError::NoGroundFound { fraction: 0.0, required });
    };
    let fraction = consensus.count as f64 / n as f64;
    if fraction < required {
        return Err(CropError::NoGroundFound { fraction, required });
    }

    let support: Vec<Point3> =
        cloud.iter().copied().filter(|p| consensus.model.distance(p) <= cfg.ground_inlier_threshold).collect();
    let ground = svd_plane(&support).ok().filter(upright).unwrap_or(consensus.model);
    let ground =
        ground.with_inlier_count(cloud.iter().filter(|p| ground.distance(p) <= cfg.ground_inlier_threshold).count());

    let kept: Vec<Point3> =
        cloud.iter().copied().filter(|p| ground.signed_distance(p) > cfg.above_ground_clearance).collect();
    if kept.is_empty() {
        return Err(CropError::EmptyAfterRemoval);
    }
    Ok((cloud.with_points(kept), ground))
}
