//! Accuracy evaluation of LiDAR SLAM pointcloud maps against surveyed
//! targets.
//!
//! Each target is a pair of perpendicular plates standing on the ground. The
//! library crops every target out of the map, estimates where its plates
//! meet, aligns those estimates with GPS positions and reports relative and
//! absolute error.

pub mod crop;
pub mod estimation;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod report;
pub mod scene;
pub mod seed;

pub use crop::{loose_crop, remove_ground, CropConfig, CropError};
pub use estimation::{
    estimate_target, intersect_planes, kmeans2, perpendicularity_gate, ransac_plane, sample_target_pose, svd_plane,
    EstimationConfig, EstimationError, GateReport, PoseSample, TargetEstimate,
};
pub use geometry::{Line3, PlaneModel, Point3, PointCloud, TargetPosePair, Transform2D};
pub use metrics::{evaluate, DimensionMode, ErrorSummary, EvaluationReport, MetricsError};
pub use pipeline::{run_evaluation, RunConfig, RunError, RunOutcome, TargetFailure};
pub use registration::{apply_transform, fit_rigid_2d, RegistrationError, RegistrationMode, RegistrationResult};
pub use report::ReportDocument;
pub use scene::{generate_scene, Scene, SceneSpec, SceneTarget};
