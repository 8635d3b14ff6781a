//! Ground-truth target positions as `target_id,x,y,z` CSV.
//!
//! Coordinates are meters in a local metric Cartesian frame. Converting
//! geodetic fixes (lat/lon/height) into such a frame happens upstream.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;

pub const GPS_HEADER: [&str; 4] = ["target_id", "x", "y", "z"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsTargetPose {
    pub target_id: String,
    pub position: Point3,
}

impl GpsTargetPose {
    pub fn new(target_id: impl Into<String>, position: Point3) -> Self {
        Self { target_id: target_id.into(), position }
    }
}

#[derive(Debug, Error)]
pub enum GpsCsvError {
    #[error("pose file has no data rows")]
    EmptyFile,
    #[error("bad header: expected `target_id,x,y,z`, found `{0}`")]
    BadHeader(String),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: duplicate target id `{target_id}`")]
    DuplicateTargetId { line: u64, target_id: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv write failure: {0}")]
    Write(#[from] csv::Error),
}

pub fn parse_gps_poses(reader: impl Read) -> Result<Vec<GpsTargetPose>, GpsCsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(reader);

    let header = rdr.headers().map_err(|e| GpsCsvError::MalformedRow { line: 1, reason: e.to_string() })?;
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(GpsCsvError::EmptyFile);
    }
    if header.iter().ne(GPS_HEADER) {
        return Err(GpsCsvError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut seen = HashSet::new();
    let mut poses = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| GpsCsvError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 4 {
            return Err(GpsCsvError::MalformedRow {
                line,
                reason: format!("expected 4 columns, found {}", record.len()),
            });
        }
        let target_id = record[0].to_string();
        if target_id.is_empty() {
            return Err(GpsCsvError::MalformedRow { line, reason: "empty target_id".into() });
        }
        let mut coords = [0.0; 3];
        for (slot, (name, raw)) in coords.iter_mut().zip(["x", "y", "z"].iter().zip(record.iter().skip(1))) {
            *slot = raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| GpsCsvError::MalformedRow {
                line,
                reason: format!("{name} = `{raw}` is not a finite number"),
            })?;
        }
        if !seen.insert(target_id.clone()) {
            return Err(GpsCsvError::DuplicateTargetId { line, target_id });
        }
        poses.push(GpsTargetPose::new(target_id, Point3::new(coords[0], coords[1], coords[2])));
    }
    if poses.is_empty() {
        return Err(GpsCsvError::EmptyFile);
    }
    Ok(poses)
}

pub fn read_gps_poses(path: impl AsRef<Path>) -> Result<Vec<GpsTargetPose>, GpsCsvError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| GpsCsvError::Io { path: path.display().to_string(), source })?;
    parse_gps_poses(file)
}

pub fn write_gps_poses(poses: &[GpsTargetPose], path: impl AsRef<Path>) -> Result<(), GpsCsvError> {
    let mut wtr = csv::Writer::from_path(path.as_ref())?;
    wtr.write_record(GPS_HEADER)?;
    for pose in poses {
        let p = pose.position;
        wtr.write_record([pose.target_id.clone(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
    }
    wtr.flush().map_err(|source| GpsCsvError::Io { path: path.as_ref().display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_rows_in_order() {
        let text = "target_id,x,y,z\nt1,0,0,0\nt2,1,0,0\nt3,0,1,0\nt4,1,1,0.5\nt5,-2.5,3,1\n";
        let poses = parse_gps_poses(text.as_bytes()).unwrap();
        let ids: Vec<_> = poses.iter().map(|p| p.target_id.as_str()).collect();
        assert_eq!(ids, ["t1", "t2", "t3", "t4", "t5"]);
        assert_eq!(poses[4].position, Point3::new(-2.5, 3.0, 1.0));
    }

    #[test]
    fn duplicate_id() {
        let text = "target_id,x,y,z\nt1,0,0,0\nt1,1,0,0\n";
        assert!(matches!(
            parse_gps_poses(text.as_bytes()),
            Err(GpsCsvError::DuplicateTargetId { line: 3, target_id }) if target_id == "t1"
        ));
    }

    #[test]
    fn malformed_coordinate_reports_line() {
        let text = "target_id,x,y,z\nt0,0,0,0\nt1,1.0,two,3.0\n";
        match parse_gps_poses(text.as_bytes()) {
            Err(GpsCsvError::MalformedRow { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("two"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let short = "target_id,x,y,z\nt1,1,2\n";
        assert!(matches!(parse_gps_poses(short.as_bytes()), Err(GpsCsvError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(parse_gps_poses("".as_bytes()), Err(GpsCsvError::EmptyFile)));
        assert!(matches!(parse_gps_poses("target_id,x,y,z\n".as_bytes()), Err(GpsCsvError::EmptyFile)));
        assert!(matches!(parse_gps_poses("id,e,n,u\nt,1,2,3\n".as_bytes()), Err(GpsCsvError::BadHeader(_))));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gps.csv");
        let poses = vec![
            GpsTargetPose::new("a", Point3::new(0.1, 0.2, 0.3)),
            GpsTargetPose::new("b", Point3::new(-1e3, 1.0 / 3.0, 0.6)),
        ];
        write_gps_poses(&poses, &path).unwrap();
        assert_eq!(read_gps_poses(&path).unwrap(), poses);
    }
}
