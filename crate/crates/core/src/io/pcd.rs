//! PCD v0.7 reading and writing.
//!
//! Reads `DATA ascii` and `DATA binary` (little-endian) files whose FIELDS
//! include `x y z` stored as 4-byte floats; any other fields are skipped.
//! `binary_compressed` is rejected. Writing always emits `x y z` as `F 4`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Error)]
pub enum PcdError {
    #[error("malformed PCD header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PCD encoding `{0}`")]
    UnsupportedEncoding(String),
    #[error("truncated PCD body: header declares {expected} points, found {found}")]
    TruncatedBody { expected: usize, found: usize },
    #[error("malformed PCD body at point {index}: {reason}")]
    MalformedBody { index: usize, reason: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcdEncoding {
    Ascii,
    Binary,
}

/// A parsed cloud plus the number of points dropped for non-finite
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PcdRead {
    pub cloud: PointCloud,
    pub dropped_non_finite: usize,
}

#[derive(Debug)]
struct Field {
    name: String,
    size: usize,
    kind: char,
    count: usize,
}

#[derive(Debug)]
struct Header {
    fields: Vec<Field>,
    points: usize,
    data: String,
    /// Byte offset of the body.
    body_start: usize,
}

impl Header {
    /// Position of `name` as (scalar column index, byte offset) within a record.
    fn locate(&self, name: &str) -> Result<(usize, usize), PcdError> {
        let mut column = 0;
        let mut offset = 0;
        for f in &self.fields {
            if f.name == name {
                if f.size != 4 || f.kind != 'F' {
                    return Err(PcdError::MalformedHeader(format!(
                        "field `{name}` must be a 4-byte float (SIZE 4, TYPE F)"
                    )));
                }
                return Ok((column, offset));
            }
            column += f.count;
            offset += f.size * f.count;
        }
        Err(PcdError::MalformedHeader(format!("FIELDS lacks `{name}`")))
    }

    fn record_bytes(&self) -> usize {
        self.fields.iter().map(|f| f.size * f.count).sum()
    }

    fn record_columns(&self) -> usize {
        self.fields.iter().map(|f| f.count).sum()
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PcdError> {
    let mut names: Option<Vec<String>> = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut kinds: Option<Vec<char>> = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut points = None;
    let mut pos = 0;

    while pos < bytes.len() {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| pos + i);
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| PcdError::MalformedHeader("header is not valid UTF-8".into()))?
            .trim();
        pos = (end + 1).min(bytes.len());

        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap_or_default().to_ascii_uppercase();
        let values: Vec<&str> = tokens.collect();
        let bad = |what: &str| PcdError::MalformedHeader(format!("invalid {what} line `{line}`"));

        match key.as_str() {
            "FIELDS" => names = Some(values.iter().map(|s| s.to_string()).collect()),
            "SIZE" => {
                sizes = Some(values.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(|_| bad("SIZE"))?)
            }
            "TYPE" => {
                kinds = Some(
                    values
                        .iter()
                        .map(|s| s.chars().next().map(|c| c.to_ascii_uppercase()))
                        .collect::<Option<_>>()
                        .ok_or_else(|| bad("TYPE"))?,
                )
            }
            "COUNT" => {
                counts = Some(values.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(|_| bad("COUNT"))?)
            }
            "POINTS" => {
                points = Some(values.first().and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad("POINTS"))?)
            }
            "DATA" => {
                let data = values.first().ok_or_else(|| bad("DATA"))?.to_ascii_lowercase();
                let names = names.ok_or_else(|| PcdError::MalformedHeader("missing FIELDS line".into()))?;
                let points = points.ok_or_else(|| PcdError::MalformedHeader("missing POINTS line".into()))?;
                let n = names.len();
                let sizes = sizes.unwrap_or_else(|| vec![4; n]);
                let kinds = kinds.unwrap_or_else(|| vec!['F'; n]);
                let counts = counts.unwrap_or_else(|| vec![1; n]);
                if sizes.len() != n || kinds.len() != n || counts.len() != n {
                    return Err(PcdError::MalformedHeader("FIELDS, SIZE, TYPE and COUNT lengths differ".into()));
                }
                let fields = names
                    .into_iter()
                    .zip(sizes)
                    .zip(kinds)
                    .zip(counts)
                    .map(|(((name, size), kind), count)| Field { name, size, kind, count })
                    .collect();
                return Ok(Header { fields, points, data, body_start: pos });
            }
            // VERSION, WIDTH, HEIGHT, VIEWPOINT carry nothing we need.
            _ => {}
        }
    }
    Err(PcdError::MalformedHeader("missing DATA line".into()))
}

/// Parses PCD bytes. Points with any non-finite coordinate are dropped.
pub fn parse_pcd(bytes: &[u8], frame_label: &str) -> Result<PcdRead, PcdError> {
    let header = parse_header(bytes)?;
    let (xc, xo) = header.locate("x")?;
    let (yc, yo) = header.locate("y")?;
    let (zc, zo) = header.locate("z")?;
    let body = &bytes[header.body_start..];

    let raw: Vec<[f32; 3]> = match header.data.as_str() {
        "ascii" => {
            let text = std::str::from_utf8(body)
                .map_err(|_| PcdError::MalformedBody { index: 0, reason: "ASCII body is not valid UTF-8".into() })?;
            let columns = header.record_columns();
            let mut out = Vec::with_capacity(header.points);
            for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
                if out.len() == header.points {
                    break;
                }
                let index = out.len();
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() < columns {
                    return Err(PcdError::MalformedBody {
                        index,
                        reason: format!("expected {columns} values, found {}", tokens.len()),
                    });
                }
                let value = |c: usize| {
                    tokens[c].parse::<f32>().map_err(|_| PcdError::MalformedBody {
                        index,
                        reason: format!("`{}` is not a number", tokens[c]),
                    })
                };
                out.push([value(xc)?, value(yc)?, value(zc)?]);
            }
            out
        }
        "binary" => {
            let stride = header.record_bytes();
            let needed = stride * header.points;
            if body.len() < needed {
                return Err(PcdError::TruncatedBody {
                    expected: header.points,
                    found: body.len().checked_div(stride).unwrap_or(0),
                });
            }
            let read =
                |rec: &[u8], off: usize| f32::from_le_bytes([rec[off], rec[off + 1], rec[off + 2], rec[off + 3]]);
            body[..needed].chunks_exact(stride).map(|rec| [read(rec, xo), read(rec, yo), read(rec, zo)]).collect()
        }
        other => return Err(PcdError::UnsupportedEncoding(other.to_string())),
    };

    if raw.len() != header.points {
        return Err(PcdError::TruncatedBody { expected: header.points, found: raw.len() });
    }

    let mut dropped = 0;
    let points = raw
        .into_iter()
        .filter_map(|[x, y, z]| {
            let p = Point3::new(x as f64, y as f64, z as f64);
            if p.is_finite() {
                Some(p)
            } else {
                dropped += 1;
                None
            }
        })
        .collect();
    Ok(PcdRead { cloud: PointCloud::new(points, frame_label), dropped_non_finite: dropped })
}

pub fn read_pcd(path: impl AsRef<Path>) -> Result<PcdRead, PcdError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PcdError::Io { path: path.display().to_string(), source })?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_pcd(&bytes, &label)
}

/// Serializes a cloud as PCD v0.7 with `x y z` float32 fields.
pub fn encode_pcd(cloud: &PointCloud, encoding: PcdEncoding) -> Vec<u8> {
    let n = cloud.len();
    let data = match encoding {
        PcdEncoding::Ascii => "ascii",
        PcdEncoding::Binary => "binary",
    };
    let mut out = format!(
        "# .PCD v0.7 - Point Cloud Data file format\n\
         VERSION 0.7\n\
         FIELDS x y z\n\
         SIZE 4 4 4\n\
         TYPE F F F\n\
         COUNT 1 1 1\n\
         WIDTH {n}\n\
         HEIGHT 1\n\
         VIEWPOINT 0 0 0 1 0 0 0\n\
         POINTS {n}\n\
         DATA {data}\n"
    )
    .into_bytes();
    match encoding {
        PcdEncoding::Ascii => {
            for p in cloud {
                // f32 Display prints the shortest string that parses back to
                // the same f32.
                writeln!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32).expect("writing to Vec cannot fail");
            }
        }
        PcdEncoding::Binary => {
            out.reserve(n * 12);
            for p in cloud {
                for v in [p.x, p.y, p.z] {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_pcd(cloud: &PointCloud, path: impl AsRef<Path>, encoding: PcdEncoding) -> Result<(), PcdError> {
    let path = path.as_ref();
    fs::write(path, encode_pcd(cloud, encoding))
        .map_err(|source| PcdError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ascii(body: &str, points: usize) -> String {
        format!(
            "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\nWIDTH {points}\nHEIGHT 1\nPOINTS {points}\nDATA ascii\n{body}"
        )
    }

    #[test]
    fn ascii_three_points_in_order() {
        let r = parse_pcd(ascii("0 0 0\n1 0 0\n0 1 0\n", 3).as_bytes(), "m").unwrap();
        assert_eq!(
            r.cloud.points,
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)]
        );
        assert_eq!(r.dropped_non_finite, 0);
    }

    #[test]
    fn nan_rows_are_dropped_and_counted() {
        let mut body = String::new();
        for i in 0..10 {
            if i == 4 {
                body.push_str("nan nan nan\n");
            } else {
                body.push_str(&format!("{i} 0 0\n"));
            }
        }
        let r = parse_pcd(ascii(&body, 10).as_bytes(), "m").unwrap();
        assert_eq!(r.cloud.len(), 9);
        assert_eq!(r.dropped_non_finite, 1);
    }

    #[test]
    fn extra_fields_are_skipped() {
        let text = "FIELDS intensity x y z ring\nSIZE 4 4 4 4 2\nTYPE F F F F U\nCOUNT 1 1 1 1 1\nPOINTS 2\nDATA ascii\n9 1 2 3 7\n9 4 5 6 7\n";
        let r = parse_pcd(text.as_bytes(), "m").unwrap();
        assert_eq!(r.cloud.points, vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);

        let mut bin = b"FIELDS x y z ring\nSIZE 4 4 4 2\nTYPE F F F U\nCOUNT 1 1 1 1\nPOINTS 1\nDATA binary\n".to_vec();
        for v in [1.5f32, -2.0, 0.25] {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        bin.extend_from_slice(&[0xff, 0xff]);
        let r = parse_pcd(&bin, "m").unwrap();
        assert_eq!(r.cloud.points, vec![Point3::new(1.5, -2.0, 0.25)]);
    }

    #[test]
    fn header_errors() {
        let missing_fields = "POINTS 1\nDATA ascii\n0 0 0\n";
        assert!(matches!(parse_pcd(missing_fields.as_bytes(), ""), Err(PcdError::MalformedHeader(_))));
        let missing_points = "FIELDS x y z\nDATA ascii\n0 0 0\n";
        assert!(matches!(parse_pcd(missing_points.as_bytes(), ""), Err(PcdError::MalformedHeader(_))));
        let missing_data = "FIELDS x y z\nPOINTS 1\n";
        assert!(matches!(parse_pcd(missing_data.as_bytes(), ""), Err(PcdError::MalformedHeader(_))));
        let no_z = "FIELDS x y\nPOINTS 1\nDATA ascii\n0 0\n";
        assert!(matches!(parse_pcd(no_z.as_bytes(), ""), Err(PcdError::MalformedHeader(_))));
        let doubles = "FIELDS x y z\nSIZE 8 8 8\nTYPE F F F\nPOINTS 1\nDATA ascii\n0 0 0\n";
        assert!(matches!(parse_pcd(doubles.as_bytes(), ""), Err(PcdError::MalformedHeader(_))));
        assert!(matches!(parse_pcd(b"", ""), Err(PcdError::MalformedHeader(_))));
    }

    #[test]
    fn compressed_is_rejected() {
        let text = "FIELDS x y z\nPOINTS 1\nDATA binary_compressed\n";
        assert!(matches!(
            parse_pcd(text.as_bytes(), ""),
            Err(PcdError::UnsupportedEncoding(e)) if e == "binary_compressed"
        ));
    }

    #[test]
    fn truncated_bodies() {
        let r = parse_pcd(ascii("0 0 0\n1 1 1\n", 3).as_bytes(), "");
        assert!(matches!(r, Err(PcdError::TruncatedBody { expected: 3, found: 2 })));
        let mut bin = encode_pcd(&PointCloud::new(vec![Point3::default(); 4], ""), PcdEncoding::Binary);
        bin.truncate(bin.len() - 5);
        assert!(matches!(parse_pcd(&bin, ""), Err(PcdError::TruncatedBody { expected: 4, found: 3 })));
    }

    #[test]
    fn empty_cloud_round_trips() {
        for enc in [PcdEncoding::Ascii, PcdEncoding::Binary] {
            let bytes = encode_pcd(&PointCloud::default(), enc);
            assert!(String::from_utf8_lossy(&bytes).contains("POINTS 0\n"));
            assert!(parse_pcd(&bytes, "").unwrap().cloud.is_empty());
        }
    }

    #[test]
    fn ascii_round_trip_small() {
        let cloud = PointCloud::new(
            vec![Point3::new(0.1, -2.25, 3.0), Point3::new(1e-3, 12345.678, -0.5), Point3::new(7.0, 8.0, 9.0)],
            "",
        );
        let back = parse_pcd(&encode_pcd(&cloud, PcdEncoding::Ascii), "").unwrap().cloud;
        for (a, b) in cloud.iter().zip(back.iter()) {
            assert!(a.distance(b) < 1e-6 * a.to_vector().norm().max(1.0));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scan.pcd");
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)], "scan");
        write_pcd(&cloud, &path, PcdEncoding::Binary).unwrap();
        let read = read_pcd(&path).unwrap();
        assert_eq!(read.cloud, cloud);
        assert!(matches!(read_pcd(dir.path().join("missing.pcd")), Err(PcdError::Io { .. })));
    }

    fn f32_points(max: usize) -> impl Strategy<Value = Vec<Point3>> {
        prop::collection::vec(
            (-1e4f32..1e4, -1e4f32..1e4, -50f32..50.0).prop_map(|(x, y, z)| Point3::new(x as f64, y as f64, z as f64)),
            0..max,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        // f32-representable coordinates survive both encodings bit-exactly,
        // so the two encodings also agree with each other.
        #[test]
        fn encodings_round_trip_exactly(points in f32_points(1000)) {
            let cloud = PointCloud::new(points, "");
            let bin = parse_pcd(&encode_pcd(&cloud, PcdEncoding::Binary), "").unwrap().cloud;
            let txt = parse_pcd(&encode_pcd(&cloud, PcdEncoding::Ascii), "").unwrap().cloud;
            prop_assert_eq!(&bin.points, &cloud.points);
            prop_assert_eq!(&txt.points, &cloud.points);
            let again = encode_pcd(&bin, PcdEncoding::Binary);
            prop_assert_eq!(again, encode_pcd(&cloud, PcdEncoding::Binary));
        }
    }
}
