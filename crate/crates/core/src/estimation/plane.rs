//! Plane fitting, plane intersection and the perpendicularity gate.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::geometry::{angle_between_planes, Line3, PlaneModel, Point3};
use crate::seed::Rng;

/// Triples whose smallest triangle height is below this fraction of the
/// inlier threshold are treated as collinear and skipped.
const MIN_HEIGHT_RATIO: f64 = 0.01;
/// Relative singular-value floor below which a point set has no plane.
const DEGENERATE_RATIO: f64 = 1e-12;
const NEAR_PARALLEL: f64 = 1e-6;

/// Best-scoring hypothesis of a RANSAC run.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Consensus {
    pub model: PlaneModel,
    pub count: usize,
}

/// Runs `iterations` three-point plane hypotheses and keeps the one with
/// most points within `threshold`, breaking ties by lower mean inlier
/// distance. Hypotheses rejected by `accept` are not scored.
pub(crate) fn best_consensus(
    points: &[Point3],
    iterations: usize,
    threshold: f64,
    rng: &mut Rng,
    accept: impl Fn(&PlaneModel) -> bool,
) -> Option<Consensus> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let mut best: Option<(Consensus, f64)> = None;
    for _ in 0..iterations {
        let idx = index::sample(rng, n, 3);
        let (a, b, c) = (points[idx.index(0)], points[idx.index(1)], points[idx.index(2)]);
        let (a_vec, b_vec, c_vec) = (a.to_vector(), b.to_vector(), c.to_vector());
        let (ab, ac, bc) = (b_vec - a_vec, c_vec - a_vec, c_vec - b_vec);
        let cross = ab.cross(&ac);
        let longest = ab.norm().max(ac.norm()).max(bc.norm());
        if cross.norm() <= MIN_HEIGHT_RATIO * threshold * longest {
            continue;
        }
        let Some(model) = PlaneModel::through_point(cross, &a, 0) else {
            continue;
        };
        if !accept(&model) {
            continue;
        }
        let (count, dist_sum) = points.iter().fold((0usize, 0.0f64), |(k, s), p| {
            let d = model.distance(p);
            if d <= threshold {
                (k + 1, s + d)
            } else {
                (k, s)
            }
        });
        let mean = dist_sum / count.max(1) as f64;
        let better = match &best {
            None => true,
            Some((b, b_mean)) => count > b.count || (count == b.count && mean < *b_mean),
        };
        if better {
            best = Some((Consensus { model, count }, mean));
        }
    }
    best.map(|(c, _)| c)
}

/// Fits a plane robustly: RANSAC with 3-point hypotheses, then the inlier
/// set is re-extracted against the winning model.
pub(crate) fn ransac_fit(
    points: &[Point3],
    iterations: usize,
    inlier_threshold: f64,
    min_inliers: usize,
    rng: &mut Rng,
) -> Result<(Vec<Point3>, PlaneModel), EstimationError> {
    if points.len() < 3 {
        return Err(EstimationError::TooFewPoints { needed: 3, found: points.len() });
    }
    let consensus = best_consensus(points, iterations, inlier_threshold, rng, |_| true);
    let best = consensus.map_or(0, |c| c.count);
    let Some(consensus) = consensus.filter(|c| c.count >= min_inliers) else {
        return Err(EstimationError::NoConsensus { best, needed: min_inliers });
    };
    let inliers: Vec<Point3> =
        points.iter().copied().filter(|p| consensus.model.distance(p) <= inlier_threshold).collect();
    let model = consensus.model.with_inlier_count(inliers.len());
    Ok((inliers, model))
}

/// Total-least-squares plane: through the centroid, normal along the right
/// singular vector of the centered points with the smallest singular value.
pub fn svd_plane(points: &[Point3]) -> Result<PlaneModel, EstimationError> {
    let n = points.len();
    if n < 3 {
        return Err(EstimationError::TooFewPoints { needed: 3, found: n });
    }
    let centroid = points.iter().fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.to_vector()) / n as f64;
    let centered = DMatrix::from_fn(n, 3, |r, c| points[r].to_vector()[c] - centroid[c]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.ok_or(EstimationError::DegeneratePlane)?;

    let s = &svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    if s[largest].is_nan() || s[largest] <= 0.0 || s[middle] < DEGENERATE_RATIO * s[largest] {
        return Err(EstimationError::DegeneratePlane);
    }
    let row = v_t.row(smallest);
    let normal = nalgebra::Vector3::new(row[0], row[1], row[2]);
    PlaneModel::through_point(normal, &Point3::from(centroid), n).ok_or(EstimationError::DegeneratePlane)
}

/// Measured angles of a perpendicularity check, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub passed: bool,
    pub plates_angle: f64,
    pub first_ground_angle: f64,
    pub second_ground_angle: f64,
}

/// Passes when the two plates are perpendicular to each other and each is
/// perpendicular to the ground, all within `tolerance_deg`.
pub fn perpendicularity_gate(
    first: &PlaneModel,
    second: &PlaneModel,
    ground: &PlaneModel,
    tolerance_deg: f64,
) -> GateReport {
    let plates_angle = angle_between_planes(first, second);
    let first_ground_angle = angle_between_planes(first, ground);
    let second_ground_angle = angle_between_planes(second, ground);
    let ok = |a: f64| (a - 90.0).abs() <= tolerance_deg;
    GateReport {
        passed: ok(plates_angle) && ok(first_ground_angle) && ok(second_ground_angle),
        plates_angle,
        first_ground_angle,
        second_ground_angle,
    }
}

/// Line shared by two planes, anchored at its point closest to the origin.
pub fn intersect_planes(first: &PlaneModel, second: &PlaneModel) -> Result<Line3, EstimationError> {
    let (n1, n2) = (first.normal(), second.normal());
    let direction = n1.cross(&n2);
    if direction.norm() < NEAR_PARALLEL {
        return Err(EstimationError::NearParallel);
    }
    // Minimum-norm solution of [n1ᵀ; n2ᵀ] x = -[d1; d2]: x = Aᵀ (A Aᵀ)⁻¹ b.
    let c = n1.dot(&n2);
    let gram = Matrix2::new(1.0, c, c, 1.0);
    let rhs = Vector2::new(-first.offset(), -second.offset());
    let coeff = gram.lu().solve(&rhs).ok_or(EstimationError::NearParallel)?;
    let point = n1 * coeff.x + n2 * coeff.y;
    Line3::new(Point3::from(point), direction).ok_or(EstimationError::NearParallel)
}
