//! Synthetic survey scenes: flat ground, cross-plate targets and noise, with
//! per-point labels and exact target positions.
//!
//! A target is two `plate_edge` × `plate_edge` vertical plates sharing their
//! vertical edge at `(x, y)`. Plate 0 extends along the yaw direction, plate 1
//! along yaw + 90°. Plate points sit on a grid whose first column lies on the
//! shared edge; rows are centred in their cells. The ground-truth pose sits on the shared edge at antenna
//! height (the top of the plates).

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PlaneModel, Point3, PointCloud};
use crate::io::GpsTargetPose;
use crate::seed;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {key} {reason}")]
    InvalidSpec { key: &'static str, reason: String },
    #[error("targets `{a}` and `{b}` are {distance:.3} m apart, closer than two plate edges")]
    OverlappingTargets { a: String, b: String, distance: f64 },
    #[error("label file write failure: {0}")]
    Write(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTarget {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Degrees about +z.
    #[serde(default)]
    pub yaw: f64,
}

impl SceneTarget {
    pub fn new(id: impl Into<String>, x: f64, y: f64, yaw: f64) -> Self {
        Self { id: id.into(), x, y, yaw }
    }

    /// Horizontal unit directions along which plate 0 and plate 1 extend.
    fn plate_directions(&self) -> [Vector3<f64>; 2] {
        let (s, c) = self.yaw.to_radians().sin_cos();
        [Vector3::new(c, s, 0.0), Vector3::new(-s, c, 0.0)]
    }

    /// The analytic (noise-free) planes of plate 0 and plate 1.
    pub fn plate_planes(&self) -> [PlaneModel; 2] {
        let [u, v] = self.plate_directions();
        let corner = Point3::new(self.x, self.y, 0.0);
        // Plate 0 spans u and z, so its normal is v; plate 1 the reverse.
        [
            PlaneModel::through_point(v, &corner, 0).expect("unit normal"),
            PlaneModel::through_point(u, &corner, 0).expect("unit normal"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub targets: Vec<SceneTarget>,
    /// Meters.
    pub plate_edge: f64,
    /// Points per m² of plate.
    pub plate_point_density: f64,
    /// Half-width in meters of the square ground patch centred on the origin.
    pub ground_extent: f64,
    /// Points per m² of ground.
    pub ground_point_density: f64,
    /// Isotropic Gaussian noise, meters.
    pub noise_sigma: f64,
    /// Extra uniform outliers as a fraction of the clean point count.
    pub outlier_fraction: f64,
    /// Fraction of plate grid points removed in a regular pattern.
    pub hole_fraction: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            plate_edge: 0.6,
            plate_point_density: 400.0,
            ground_extent: 30.0,
            ground_point_density: 100.0,
            noise_sigma: 0.01,
            outlier_fraction: 0.0,
            hole_fraction: 0.3,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// `count` targets evenly spaced on an axis-aligned ellipse, with yaw
    /// varying per target.
    pub fn ellipse_targets(count: usize, semi_x: f64, semi_y: f64) -> Vec<SceneTarget> {
        (0..count)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / count as f64;
                SceneTarget::new(format!("t{}", i + 1), semi_x * a.cos(), semi_y * a.sin(), 17.0 + 29.0 * i as f64)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let check = |key: &'static str, ok: bool, v: f64, what: &str| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(SceneError::InvalidSpec { key, reason: format!("must be {what}, got {v}") })
            }
        };
        check("plate_edge", self.plate_edge > 0.0, self.plate_edge, "positive")?;
        check("plate_point_density", self.plate_point_density > 0.0, self.plate_point_density, "positive")?;
        check("ground_extent", self.ground_extent > 0.0, self.ground_extent, "positive")?;
        check("ground_point_density", self.ground_point_density > 0.0, self.ground_point_density, "positive")?;
        check("noise_sigma", self.noise_sigma >= 0.0, self.noise_sigma, "non-negative")?;
        check("outlier_fraction", self.outlier_fraction >= 0.0, self.outlier_fraction, "non-negative")?;
        check("hole_fraction", (0.0..1.0).contains(&self.hole_fraction), self.hole_fraction, "in [0, 1)")?;

        let mut ids = HashSet::new();
        for t in &self.targets {
            if !ids.insert(t.id.as_str()) {
                return Err(SceneError::InvalidSpec { key: "targets", reason: format!("duplicate id `{}`", t.id) });
            }
            if !(t.x.is_finite() && t.y.is_finite() && t.yaw.is_finite()) {
                return Err(SceneError::InvalidSpec {
                    key: "targets",
                    reason: format!("target `{}` has a non-finite coordinate", t.id),
                });
            }
        }
        for (i, a) in self.targets.iter().enumerate() {
            for b in &self.targets[i + 1..] {
                let distance = (a.x - b.x).hypot(a.y - b.y);
                if distance < 2.0 * self.plate_edge {
                    return Err(SceneError::OverlappingTargets { a: a.id.clone(), b: b.id.clone(), distance });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PointLabel {
    Ground,
    Plate { target: usize, plate: u8 },
    Outlier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub map: PointCloud,
    pub truth: Vec<GpsTargetPose>,
    /// One label per map point.
    pub labels: Vec<PointLabel>,
}

/// 4×4 ordered-dither thresholds; removing cells whose threshold falls below
/// the hole fraction spreads holes evenly over the plate.
const BAYER4: [[u8; 4]; 4] = [[0, 8, 2, 10], [12, 4, 14, 6], [3, 11, 1, 9], [15, 7, 13, 5]];

fn is_hole(i: usize, j: usize, hole_fraction: f64) -> bool {
    (BAYER4[i % 4][j % 4] as f64 + 0.5) / 16.0 < hole_fraction
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SceneError> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();

    let e = spec.ground_extent;
    let ground_count = (spec.ground_point_density * 4.0 * e * e).round() as usize;
    for _ in 0..ground_count {
        points.push(Point3::new(rng.random_range(-e..=e), rng.random_range(-e..=e), 0.0));
        labels.push(PointLabel::Ground);
    }

    let edge = spec.plate_edge;
    let cells = ((edge * spec.plate_point_density.sqrt()).round() as usize).max(1);
    let step = edge / cells as f64;
    for (t, target) in spec.targets.iter().enumerate() {
        let corner = Vector3::new(target.x, target.y, 0.0);
        for (k, dir) in target.plate_directions().iter().enumerate() {
            // Columns start on the shared edge; plate 0 owns the edge column.
            for i in k..=cells {
                for j in 0..cells {
                    if is_hole(i, j, spec.hole_fraction) {
                        continue;
                    }
                    let along = i as f64 * step;
                    let up = (j as f64 + 0.5) * step;
                    let p = corner + dir * along;
                    points.push(Point3::new(p.x, p.y, up));
                    labels.push(PointLabel::Plate { target: t, plate: k as u8 });
                }
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        for p in &mut points {
            p.x += noise.sample(&mut rng);
            p.y += noise.sample(&mut rng);
            p.z += noise.sample(&mut rng);
        }
    }

    let outliers = (spec.outlier_fraction * points.len() as f64).round() as usize;
    if outliers > 0 {
        let (lo, hi) = points.iter().fold((Vector3::repeat(f64::MAX), Vector3::repeat(f64::MIN)), |(lo, hi), p| {
            (lo.inf(&p.to_vector()), hi.sup(&p.to_vector()))
        });
        for _ in 0..outliers {
            let draw = |rng: &mut seed::Rng, a: f64, b: f64| if a < b { rng.random_range(a..=b) } else { a };
            let p = Point3::new(draw(&mut rng, lo.x, hi.x), draw(&mut rng, lo.y, hi.y), draw(&mut rng, lo.z, hi.z));
            points.push(p);
            labels.push(PointLabel::Outlier);
        }
    }

    let truth = spec.targets.iter().map(|t| GpsTargetPose::new(t.id.clone(), Point3::new(t.x, t.y, edge))).collect();
    Ok(Scene { map: PointCloud::new(points, "map"), truth, labels })
}

/// Writes `index,label,target_id,plate` rows, one per map point.
pub fn write_labels(scene: &Scene, targets: &[SceneTarget], path: impl AsRef<Path>) -> Result<(), SceneError> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["index", "label", "target_id", "plate"])?;
    for (i, label) in scene.labels.iter().enumerate() {
        let (kind, id, plate) = match label {
            PointLabel::Ground => ("ground", String::new(), String::new()),
            PointLabel::Outlier => ("outlier", String::new(), String::new()),
            PointLabel::Plate { target, plate } => ("plate", targets[*target].id.clone(), plate.to_string()),
        };
        wtr.write_record([i.to_string(), kind.to_string(), id, plate])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
