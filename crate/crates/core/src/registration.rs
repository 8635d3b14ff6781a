//! Planar rigid alignment of estimated target positions onto ground truth.
//!
//! Only x and y take part. `LeastSquares` is the closed-form orthogonal
//! Procrustes solution of the squared objective. `SumOfDistances`
//! minimizes the unsquared sum of distances by iteratively reweighted least
//! squares, starting from the closed form.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TargetPosePair, Transform2D};

const IRLS_MAX_ITERATIONS: usize = 100;
const IRLS_MIN_DECREASE: f64 = 1e-12;
const IRLS_RESIDUAL_FLOOR: f64 = 1e-9;
/// Estimated x,y spread below which rotation is unobservable.
const DEGENERATE_SPREAD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("registration needs at least 2 pose pairs, got {0}")]
    TooFewPairs(usize),
    #[error("estimated positions coincide in x,y; rotation is undetermined")]
    DegenerateConfiguration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationMode {
    #[default]
    LeastSquares,
    #[serde(alias = "eq1_sum_of_distances")]
    SumOfDistances,
}

impl fmt::Display for RegistrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LeastSquares => "least-squares",
            Self::SumOfDistances => "sum-of-distances",
        })
    }
}

impl FromStr for RegistrationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "least-squares" | "least_squares" => Ok(Self::LeastSquares),
            "sum-of-distances" | "sum_of_distances" | "eq1" | "eq1_sum_of_distances" => Ok(Self::SumOfDistances),
            other => Err(format!("unknown registration mode `{other}` (expected least-squares or sum-of-distances)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub transform: Transform2D,
    /// Per-pair x,y distance after alignment, in input order.
    pub residuals: Vec<f64>,
    /// Sum of `residuals`.
    pub objective: f64,
    /// Reweighting iterations; 0 for the closed form.
    pub iterations: usize,
}

fn xy(p: &crate::geometry::Point3) -> Vector2<f64> {
    Vector2::new(p.x, p.y)
}

/// Weighted orthogonal Procrustes in the plane: rotation from the SVD of the
/// weighted cross-covariance, with the determinant forced to +1.
fn weighted_procrustes(src: &[Vector2<f64>], dst: &[Vector2<f64>], weights: &[f64]) -> Transform2D {
    let total: f64 = weights.iter().sum();
    let centroid =
        |pts: &[Vector2<f64>]| pts.iter().zip(weights).fold(Vector2::zeros(), |acc, (p, w)| acc + p * *w) / total;
    let (cs, cd) = (centroid(src), centroid(dst));
    let cov = src
        .iter()
        .zip(dst)
        .zip(weights)
        .fold(Matrix2::zeros(), |acc, ((s, d), w)| acc + (d - cd) * (s - cs).transpose() * *w);
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let sign = (u * v_t).determinant().signum();
    let correction = Matrix2::new(1.0, 0.0, 0.0, if sign == 0.0 { 1.0 } else { sign });
    let rotation = u * correction * v_t;
    // Re-derive from the angle so the result is orthonormal to rounding.
    let angle = rotation[(1, 0)].atan2(rotation[(0, 0)]);
    let aligned = Transform2D::from_angle(angle, Vector2::zeros());
    let translation = cd - aligned.rotation() * cs;
    Transform2D::from_angle(angle, translation)
}

fn residuals(t: &Transform2D, src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Vec<f64> {
    src.iter().zip(dst).map(|(s, d)| (t.apply_xy(*s) - d).norm()).collect()
}

/// Finds the planar rigid transform taking estimated positions onto their
/// ground-truth counterparts.
pub fn fit_rigid_2d(pairs: &[TargetPosePair], mode: RegistrationMode) -> Result<RegistrationResult, RegistrationError> {
    fit_traced(pairs, mode).map(|(r, _)| r)
}

/// As [`fit_rigid_2d`], also returning the objective after every accepted
/// step (the closed form first).
pub(crate) fn fit_traced(
    pairs: &[TargetPosePair],
    mode: RegistrationMode,
) -> Result<(RegistrationResult, Vec<f64>), RegistrationError> {
    if pairs.len() < 2 {
        return Err(RegistrationError::TooFewPairs(pairs.len()));
    }
    let src: Vec<Vector2<f64>> = pairs.iter().map(|p| xy(&p.estimated)).collect();
    let dst: Vec<Vector2<f64>> = pairs.iter().map(|p| xy(&p.ground_truth)).collect();
    let mean = src.iter().sum::<Vector2<f64>>() / src.len() as f64;
    if src.iter().all(|p| (p - mean).norm() < DEGENERATE_SPREAD) {
        return Err(RegistrationError::DegenerateConfiguration);
    }

    let mut transform = weighted_procrustes(&src, &dst, &vec![1.0; src.len()]);
    let mut res = residuals(&transform, &src, &dst);
    let mut objective: f64 = res.iter().sum();
    let mut trace = vec![objective];
    let mut iterations = 0;

    if mode == RegistrationMode::SumOfDistances {
        while iterations < IRLS_MAX_ITERATIONS {
            let weights: Vec<f64> = res.iter().map(|r| 1.0 / r.max(IRLS_RESIDUAL_FLOOR)).collect();
            let candidate = weighted_procrustes(&src, &dst, &weights);
            let cand_res = residuals(&candidate, &src, &dst);
            let cand_obj: f64 = cand_res.iter().sum();
            // The reweighted step majorizes the objective; the floor on tiny
            // residuals can break that, so never accept an increase.
            if cand_obj > objective {
                break;
            }
            iterations += 1;
            let decrease = objective - cand_obj;
            transform = candidate;
            res = cand_res;
            objective = cand_obj;
            trace.push(objective);
            if decrease < IRLS_MIN_DECREASE {
                break;
            }
        }
    }

    Ok((RegistrationResult { transform, residuals: res, objective, iterations }, trace))
}

/// Maps a point through `t`; z is unchanged.
pub fn apply_transform(t: &Transform2D, p: &crate::geometry::Point3) -> crate::geometry::Point3 {
    t.apply(p)
}
