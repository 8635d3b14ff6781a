//! Relative and absolute map error metrics.
//!
//! Relative error compares every inter-target distance in the map with the
//! same distance in ground truth; it is rigid-invariant, so it needs no
//! registration. Absolute error is the per-target distance after planar
//! registration. Spreads are population standard deviations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::TargetEstimate;
use crate::geometry::{Point3, TargetPosePair, Transform2D};
use crate::io::GpsTargetPose;
use crate::registration::{fit_rigid_2d, RegistrationError, RegistrationMode, RegistrationResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} targets, got {found}")]
    TooFewTargets { needed: usize, found: usize },
    #[error("duplicate target id `{0}`")]
    DuplicateTargetId(String),
    #[error("target ids differ: no estimate for {missing_estimates:?}, no ground truth for {missing_ground_truth:?}")]
    IdMismatch { missing_estimates: Vec<String>, missing_ground_truth: Vec<String> },
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DimensionMode {
    #[default]
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

impl DimensionMode {
    pub fn distance(self, a: &Point3, b: &Point3) -> f64 {
        match self {
            Self::TwoD => a.horizontal_distance(b),
            Self::ThreeD => a.distance(b),
        }
    }
}

impl fmt::Display for DimensionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TwoD => "2d",
            Self::ThreeD => "3d",
        })
    }
}

impl FromStr for DimensionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "2d" => Ok(Self::TwoD),
            "3d" => Ok(Self::ThreeD),
            other => Err(format!("unknown dimension mode `{other}` (expected 2d or 3d)")),
        }
    }
}

/// Mean and population standard deviation, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation of `values`; `None` when empty.
pub fn summarize(values: &[f64]) -> Option<ErrorSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(ErrorSummary { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseError {
    pub id_a: String,
    pub id_b: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetError {
    pub target_id: String,
    pub error: f64,
}

fn sorted_unique(pairs: &[TargetPosePair]) -> Result<Vec<&TargetPosePair>, MetricsError> {
    let mut sorted: Vec<&TargetPosePair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.target_id.cmp(&b.target_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].target_id == w[1].target_id) {
        return Err(MetricsError::DuplicateTargetId(w[0].target_id.clone()));
    }
    Ok(sorted)
}

/// `| ‖xᵢ−xⱼ‖ − ‖x̂ᵢ−x̂ⱼ‖ |` for every unordered pair, sorted by `(id_a, id_b)`.
pub fn pairwise_distance_errors(
    pairs: &[TargetPosePair],
    dim: DimensionMode,
) -> Result<Vec<PairwiseError>, MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::TooFewTargets { needed: 2, found: pairs.len() });
    }
    let sorted = sorted_unique(pairs)?;
    let mut out = Vec::with_capacity(sorted.len() * (sorted.len() - 1) / 2);
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            let mapped = dim.distance(&a.estimated, &b.estimated);
            let truth = dim.distance(&a.ground_truth, &b.ground_truth);
            out.push(PairwiseError {
                id_a: a.target_id.clone(),
                id_b: b.target_id.clone(),
                error: (mapped - truth).abs(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeError {
    pub summary: ErrorSummary,
    pub pairwise: Vec<PairwiseError>,
}

pub fn relative_error(pairs: &[TargetPosePair], dim: DimensionMode) -> Result<RelativeError, MetricsError> {
    let pairwise = pairwise_distance_errors(pairs, dim)?;
    let values: Vec<f64> = pairwise.iter().map(|p| p.error).collect();
    Ok(RelativeError { summary: summarize(&values).expect("at least one pair"), pairwise })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsoluteError {
    pub summary: ErrorSummary,
    pub per_target: Vec<TargetError>,
}

/// Distance from each registered estimate to its ground truth, ordered by id.
pub fn absolute_error(
    pairs: &[TargetPosePair],
    transform: &Transform2D,
    dim: DimensionMode,
) -> Result<AbsoluteError, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::TooFewTargets { needed: 1, found: 0 });
    }
    let per_target: Vec<TargetError> = sorted_unique(pairs)?
        .into_iter()
        .map(|p| TargetError {
            target_id: p.target_id.clone(),
            error: dim.distance(&transform.apply(&p.estimated), &p.ground_truth),
        })
        .collect();
    let values: Vec<f64> = per_target.iter().map(|t| t.error).collect();
    Ok(AbsoluteError { summary: summarize(&values).expect("non-empty"), per_target })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Pairs in target-id order; the basis of every other field.
    pub pairs: Vec<TargetPosePair>,
    pub relative: ErrorSummary,
    pub pairwise_errors: Vec<PairwiseError>,
    pub absolute: ErrorSummary,
    pub per_target_errors: Vec<TargetError>,
    pub registration: RegistrationResult,
    pub dimension_mode: DimensionMode,
}

/// Matches estimates to ground truth by id, registers them, and computes
/// both metrics.
pub fn evaluate(
    estimates: &[TargetEstimate],
    gps: &[GpsTargetPose],
    mode: RegistrationMode,
    dim: DimensionMode,
) -> Result<EvaluationReport, MetricsError> {
    let mut est: BTreeMap<&str, &TargetEstimate> = BTreeMap::new();
    for e in estimates {
        if est.insert(e.target_id.as_str(), e).is_some() {
            return Err(MetricsError::DuplicateTargetId(e.target_id.clone()));
        }
    }
    let mut truth: BTreeMap<&str, &GpsTargetPose> = BTreeMap::new();
    for g in gps {
        if truth.insert(g.target_id.as_str(), g).is_some() {
            return Err(MetricsError::DuplicateTargetId(g.target_id.clone()));
        }
    }
    let est_ids: BTreeSet<&str> = est.keys().copied().collect();
    let gps_ids: BTreeSet<&str> = truth.keys().copied().collect();
    if est_ids != gps_ids {
        return Err(MetricsError::IdMismatch {
            missing_estimates: gps_ids.difference(&est_ids).map(|s| s.to_string()).collect(),
            missing_ground_truth: est_ids.difference(&gps_ids).map(|s| s.to_string()).collect(),
        });
    }
    if est.len() < 2 {
        return Err(MetricsError::TooFewTargets { needed: 2, found: est.len() });
    }

    let pairs: Vec<TargetPosePair> =
        est.iter().map(|(id, e)| TargetPosePair::new(*id, e.position, truth[id].position)).collect();
    let registration = fit_rigid_2d(&pairs, mode)?;
    let relative = relative_error(&pairs, dim)?;
    let absolute = absolute_error(&pairs, &registration.transform, dim)?;
    Ok(EvaluationReport {
        pairs,
        relative: relative.summary,
        pairwise_errors: relative.pairwise,
        absolute: absolute.summary,
        per_target_errors: absolute.per_target,
        registration,
        dimension_mode: dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;
    use proptest::prelude::*;

    fn pair(id: &str, est: (f64, f64), gt: (f64, f64)) -> TargetPosePair {
        TargetPosePair::new(id, Point3::new(est.0, est.1, 0.0), Point3::new(gt.0, gt.1, 0.0))
    }

    #[test]
    fn distance_preserving_pair_has_zero_error() {
        let pairs = [pair("a", (0.0, 0.0), (0.0, 0.0)), pair("b", (3.0, 4.0), (0.0, 5.0))];
        let e = pairwise_distance_errors(&pairs, DimensionMode::TwoD).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].error, 0.0);
    }

    #[test]
    fn three_target_breakdown() {
        let pairs = [
            pair("t2", (1.0, 0.0), (1.1, 0.0)),
            pair("t1", (0.0, 0.0), (0.0, 0.0)),
            pair("t3", (0.0, 2.0), (0.0, 2.0)),
        ];
        let e = pairwise_distance_errors(&pairs, DimensionMode::TwoD).unwrap();
        let ids: Vec<_> = e.iter().map(|p| (p.id_a.as_str(), p.id_b.as_str())).collect();
        assert_eq!(ids, [("t1", "t2"), ("t1", "t3"), ("t2", "t3")]);
        // Frozen from direct arithmetic: |1 - 1.1|, |2 - 2|, |√5 - √(1.21 + 4)|.
        assert!((e[0].error - 0.1).abs() < 1e-12);
        assert_eq!(e[1].error, 0.0);
        assert!((e[2].error - (5f64.sqrt() - 5.21f64.sqrt()).abs()).abs() < 1e-12);
    }

    #[test]
    fn identical_sets_have_zero_errors() {
        let pairs: Vec<_> =
            (0..5).map(|i| pair(&format!("t{i}"), (i as f64, 2.0 * i as f64), (i as f64, 2.0 * i as f64))).collect();
        let r = relative_error(&pairs, DimensionMode::TwoD).unwrap();
        assert_eq!(r.summary, ErrorSummary { mean: 0.0, std: 0.0 });
        assert_eq!(r.pairwise.len(), 10);
        let a = absolute_error(&pairs, &Transform2D::identity(), DimensionMode::TwoD).unwrap();
        assert!(a.per_target.iter().all(|t| t.error == 0.0));
    }

    #[test]
    fn errors_on_bad_input() {
        assert!(matches!(
            pairwise_distance_errors(&[pair("a", (0.0, 0.0), (0.0, 0.0))], DimensionMode::TwoD),
            Err(MetricsError::TooFewTargets { .. })
        ));
        let dup = [pair("a", (0.0, 0.0), (0.0, 0.0)), pair("a", (1.0, 0.0), (1.0, 0.0))];
        assert_eq!(
            pairwise_distance_errors(&dup, DimensionMode::TwoD),
            Err(MetricsError::DuplicateTargetId("a".into()))
        );
        assert!(absolute_error(&[], &Transform2D::identity(), DimensionMode::TwoD).is_err());
        assert_eq!(summarize(&[]), None);
    }

    #[test]
    fn dimension_modes_differ_in_z() {
        let pairs = [
            TargetPosePair::new("a", Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 0.0, 0.0)),
            TargetPosePair::new("b", Point3::new(3.0, 0.0, 4.0), Point3::new(3.0, 0.0, 0.0)),
        ];
        assert_eq!(pairwise_distance_errors(&pairs, DimensionMode::TwoD).unwrap()[0].error, 0.0);
        assert_eq!(pairwise_distance_errors(&pairs, DimensionMode::ThreeD).unwrap()[0].error, 2.0);
    }

    fn estimate(id: &str, p: Point3) -> TargetEstimate {
        TargetEstimate {
            target_id: id.into(),
            position: p,
            sample_positions: vec![p],
            sample_spread: Point3::default(),
            plane_pair: [crate::geometry::PlaneModel::ground(); 2],
            retries_used: 0,
        }
    }

    #[test]
    fn evaluate_reports_id_mismatch() {
        let gps: Vec<_> =
            (1..=5).map(|i| GpsTargetPose::new(format!("t{i}"), Point3::new(i as f64, 0.0, 0.0))).collect();
        let est: Vec<_> = (1..=4).map(|i| estimate(&format!("t{i}"), Point3::new(i as f64, 0.0, 0.0))).collect();
        assert_eq!(
            evaluate(&est, &gps, RegistrationMode::LeastSquares, DimensionMode::TwoD),
            Err(MetricsError::IdMismatch { missing_estimates: vec!["t5".into()], missing_ground_truth: vec![] })
        );
    }

    #[test]
    fn evaluate_registers_a_moved_map() {
        let gps: Vec<_> = [(0.0, 0.0), (10.0, 1.0), (4.0, 8.0), (-3.0, 5.0)]
            .iter()
            .enumerate()
            .map(|(i, (x, y))| GpsTargetPose::new(format!("t{i}"), Point3::new(*x, *y, 0.6)))
            .collect();
        let motion = Transform2D::from_angle(0.4, Vector2::new(-7.0, 3.0));
        let est: Vec<_> = gps.iter().map(|g| estimate(&g.target_id, motion.apply(&g.position))).collect();
        let r = evaluate(&est, &gps, RegistrationMode::LeastSquares, DimensionMode::TwoD).unwrap();
        assert!(r.relative.mean < 1e-12);
        assert!(r.absolute.mean < 1e-12);
        assert_eq!(r.pairwise_errors.len(), 6);
        assert_eq!(r.per_target_errors.len(), 4);
    }

    fn pose_set() -> impl Strategy<Value = Vec<(f64, f64, f64, f64)>> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -0.5..0.5f64, -0.5..0.5f64), 2..9)
    }

    proptest! {
        #[test]
        fn relative_error_is_rigid_invariant(set in pose_set(), yaw in -3.2..3.2f64, tx in -100.0..100.0f64, ty in -100.0..100.0f64) {
            let t = Transform2D::from_angle(yaw, Vector2::new(tx, ty));
            let pairs: Vec<_> = set.iter().enumerate().map(|(i, (x, y, dx, dy))| {
                TargetPosePair::new(format!("{i:02}"), Point3::new(x + dx, y + dy, 0.0), Point3::new(*x, *y, 0.0))
            }).collect();
            let moved: Vec<_> = pairs.iter().map(|p| TargetPosePair { estimated: t.apply(&p.estimated), ..p.clone() }).collect();
            let a = relative_error(&pairs, DimensionMode::TwoD).unwrap();
            let b = relative_error(&moved, DimensionMode::TwoD).unwrap();
            prop_assert!((a.summary.mean - b.summary.mean).abs() < 1e-9);
        }

        #[test]
        fn absolute_error_is_invariant_under_shared_motion(set in pose_set(), yaw in -3.2..3.2f64, tx in -100.0..100.0f64, ty in -100.0..100.0f64) {
            let t = Transform2D::from_angle(yaw, Vector2::new(tx, ty));
            let pairs: Vec<_> = set.iter().enumerate().map(|(i, (x, y, dx, dy))| {
                TargetPosePair::new(format!("{i:02}"), Point3::new(x + dx, y + dy, 0.0), Point3::new(*x, *y, 0.0))
            }).collect();
            let moved: Vec<_> = pairs.iter().map(|p| TargetPosePair {
                estimated: t.apply(&p.estimated),
                ground_truth: t.apply(&p.ground_truth),
                ..p.clone()
            }).collect();
            let a = absolute_error(&pairs, &Transform2D::identity(), DimensionMode::TwoD).unwrap();
            let b = absolute_error(&moved, &Transform2D::identity(), DimensionMode::TwoD).unwrap();
            prop_assert!((a.summary.mean - b.summary.mean).abs() < 1e-9);
        }
    }
}
