//! File formats: PCD pointcloud maps and ground-truth pose CSVs.

pub mod gps;
pub mod pcd;

pub use gps::{parse_gps_poses, read_gps_poses, write_gps_poses, GpsCsvError, GpsTargetPose};
pub use pcd::{encode_pcd, parse_pcd, read_pcd, write_pcd, PcdEncoding, PcdError, PcdRead};
