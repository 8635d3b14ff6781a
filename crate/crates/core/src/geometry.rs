//! Shared geometric value types: points, clouds, planes, lines and planar
//! rigid transforms, plus the angle measurements the target gate relies on.
//!
//! Planes and lines are unoriented. Every constructor canonicalizes the sign
//! of the normal/direction so that equal geometry compares equal.

use std::fmt;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Below this magnitude a normal/direction component counts as zero when
/// choosing the canonical sign.
const SIGN_EPS: f64 = 1e-9;

/// A 3D point in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    /// Distance using only the x and y coordinates.
    pub fn horizontal_distance(&self, other: &Point3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<Vector3<f64>> for Point3 {
    fn from(v: Vector3<f64>) -> Self {
        Self::from_vector(&v)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// An ordered set of points sharing one coordinate frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_label: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_label: impl Into<String>) -> Self {
        Self { points, frame_label: frame_label.into() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// A new cloud in the same frame holding the given points.
    pub fn with_points(&self, points: Vec<Point3>) -> Self {
        Self::new(points, self.frame_label.clone())
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.to_vector());
        Some(Point3::from(sum / self.points.len() as f64))
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Flips `v` so its first significant component in the order z, x, y is
/// non-negative.
fn canonical_sign(v: Vector3<f64>) -> f64 {
    if v.z.abs() > SIGN_EPS {
        v.z.signum()
    } else if v.x.abs() > SIGN_EPS {
        v.x.signum()
    } else if v.y < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// An unoriented plane `normal · p + offset = 0` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    normal: Point3,
    offset: f64,
    inlier_count: usize,
}

impl PlaneModel {
    /// Builds a plane from any non-zero normal; the normal is scaled to unit
    /// length (scaling `offset` alongside) and sign-canonicalized.
    ///
    /// Returns `None` when the normal is zero or non-finite.
    pub fn new(normal: Vector3<f64>, offset: f64, inlier_count: usize) -> Option<Self> {
        let norm = normal.norm();
        if !(norm.is_finite() && norm > 0.0 && offset.is_finite()) {
            return None;
        }
        let unit = normal / norm;
        let sign = canonical_sign(unit);
        Some(Self { normal: Point3::from(unit * sign), offset: offset / norm * sign, inlier_count })
    }

    /// The plane with the given normal passing through `point`.
    pub fn through_point(normal: Vector3<f64>, point: &Point3, inlier_count: usize) -> Option<Self> {
        let norm = normal.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        let unit = normal / norm;
        Self::new(unit, -unit.dot(&point.to_vector()), inlier_count)
    }

    /// The horizontal plane `z = 0`.
    pub fn ground() -> Self {
        Self { normal: Point3::new(0.0, 0.0, 1.0), offset: 0.0, inlier_count: 0 }
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.normal.to_vector()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn inlier_count(&self) -> usize {
        self.inlier_count
    }

    pub fn with_inlier_count(mut self, inlier_count: usize) -> Self {
        self.inlier_count = inlier_count;
        self
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.x * p.x + self.normal.y * p.y + self.normal.z * p.z + self.offset
    }

    pub fn distance(&self, p: &Point3) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Re-applies the sign convention without renormalizing. Constructors
    /// already return canonical planes, so this is the identity on any value
    /// not produced by [`PlaneModel::flipped_raw`].
    pub fn canonicalized(&self) -> Self {
        let sign = canonical_sign(self.normal());
        Self { normal: Point3::from(self.normal() * sign), offset: self.offset * sign, inlier_count: self.inlier_count }
    }

    /// The same plane with its normal negated, bypassing canonicalization.
    /// Only useful for exercising orientation independence.
    pub fn flipped_raw(&self) -> Self {
        Self {
            normal: Point3::new(-self.normal.x, -self.normal.y, -self.normal.z),
            offset: -self.offset,
            inlier_count: self.inlier_count,
        }
    }
}

/// An unoriented line through `point` along a unit `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line3 {
    point: Point3,
    direction: Point3,
}

impl Line3 {
    pub fn new(point: Point3, direction: Vector3<f64>) -> Option<Self> {
        let norm = direction.norm();
        if !(norm.is_finite() && norm > 0.0 && point.is_finite()) {
            return None;
        }
        let unit = direction / norm;
        Some(Self { point, direction: Point3::from(unit * canonical_sign(unit)) })
    }

    pub fn point(&self) -> Point3 {
        self.point
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction.to_vector()
    }

    /// The point on the line whose z coordinate equals `z`, or `None` for a
    /// horizontal line.
    pub fn point_at_height(&self, z: f64) -> Option<Point3> {
        let dir = self.direction();
        if dir.z.abs() < SIGN_EPS {
            return None;
        }
        let t = (z - self.point.z) / dir.z;
        let p = self.point.to_vector() + dir * t;
        Some(Point3::new(p.x, p.y, z))
    }
}

/// A proper planar rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2D {
    rotation: Matrix2<f64>,
    translation: Vector2<f64>,
}

impl Transform2D {
    pub fn identity() -> Self {
        Self { rotation: Matrix2::identity(), translation: Vector2::zeros() }
    }

    pub fn from_angle(radians: f64, translation: Vector2<f64>) -> Self {
        let (s, c) = radians.sin_cos();
        Self { rotation: Matrix2::new(c, -s, s, c), translation }
    }

    /// Accepts `rotation` only if it is orthonormal with determinant +1
    /// within 1e-9.
    pub fn from_parts(rotation: Matrix2<f64>, translation: Vector2<f64>) -> Option<Self> {
        let gram = rotation.transpose() * rotation - Matrix2::identity();
        if gram.amax() > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return None;
        }
        Some(Self { rotation, translation })
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        self.rotation
    }

    pub fn translation(&self) -> Vector2<f64> {
        self.translation
    }

    /// Rotation angle in radians, in (-π, π].
    pub fn angle(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn apply_xy(&self, xy: Vector2<f64>) -> Vector2<f64> {
        self.rotation * xy + self.translation
    }

    /// Maps (x, y) through the transform; z is carried through unchanged.
    pub fn apply(&self, p: &Point3) -> Point3 {
        let xy = self.apply_xy(Vector2::new(p.x, p.y));
        Point3::new(xy.x, xy.y, p.z)
    }

    /// `self ∘ first`: applying the result equals applying `first`, then `self`.
    pub fn compose(&self, first: &Transform2D) -> Transform2D {
        Transform2D {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform2D {
        let rt = self.rotation.transpose();
        Transform2D { rotation: rt, translation: -(rt * self.translation) }
    }
}

impl Default for Transform2D {
    fn default() -> Self {
        Self::identity()
    }
}

/// An estimated target position matched with its ground-truth position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPosePair {
    pub target_id: String,
    pub estimated: Point3,
    pub ground_truth: Point3,
}

impl TargetPosePair {
    pub fn new(target_id: impl Into<String>, estimated: Point3, ground_truth: Point3) -> Self {
        Self { target_id: target_id.into(), estimated, ground_truth }
    }
}

/// Acute angle between two planes in degrees, in [0, 90].
pub fn angle_between_planes(a: &PlaneModel, b: &PlaneModel) -> f64 {
    let (n, m) = (a.normal(), b.normal());
    // atan2 keeps full precision near 0° where acos does not.
    n.cross(&m).norm().atan2(n.dot(&m).abs()).to_degrees()
}

/// Angle between a line and a plane in degrees, in [0, 90]; 90 means the
/// line is along the plane normal.
pub fn plane_line_intersection_angle(plane: &PlaneModel, line: &Line3) -> f64 {
    let (n, d) = (plane.normal(), line.direction());
    n.dot(&d).abs().atan2(n.cross(&d).norm()).to_degrees()
}
