use std::path::Path;

use map_eval::estimation::EstimationConfig;
use map_eval::geometry::{Point3, PointCloud};
use map_eval::io::{write_gps_poses, write_pcd, GpsTargetPose, PcdEncoding};
use map_eval::pipeline::{run_evaluation, run_on_map, RunConfig, RunError, Stage};
use map_eval::report::{write_absolute_table, write_relative_table, ReportDocument};
use map_eval::scene::{generate_scene, PointLabel, Scene, SceneSpec};

fn scene(seed: u64) -> (SceneSpec, Scene) {
    let spec = SceneSpec {
        targets: SceneSpec::ellipse_targets(4, 9.0, 6.0),
        ground_extent: 12.0,
        seed,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    (spec, scene)
}

fn fast() -> RunConfig {
    RunConfig {
        estimation: EstimationConfig { sample_count: 10, ..EstimationConfig::default() },
        seed: 2,
        ..RunConfig::default()
    }
}

fn write_inputs(dir: &Path, scene: &Scene) -> RunConfig {
    let map = dir.join("map.pcd");
    let gps = dir.join("gps.csv");
    write_pcd(&scene.map, &map, PcdEncoding::Binary).unwrap();
    write_gps_poses(&scene.truth, &gps).unwrap();
    RunConfig { map_path: Some(map), gps_path: Some(gps), ..fast() }
}

#[test]
fn full_map_run_recovers_targets() {
    let (_, scene) = scene(1);
    let dir = tempfile::tempdir().unwrap();
    let out = run_evaluation(&write_inputs(dir.path(), &scene)).unwrap();
    assert!(out.is_complete(), "{:?}", out.failures);
    let report = out.report.as_ref().unwrap();
    assert_eq!(report.pairwise_errors.len(), 6);
    assert!(report.relative.mean < 0.03 && report.absolute.mean < 0.03);

    let doc = ReportDocument::from_outcome(&out);
    let json: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
    for key in ["relative_error", "absolute_error", "pairwise", "per_target", "registration", "failures", "config_echo"]
    {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["per_target"].as_array().unwrap().len(), 4);
    assert_eq!(json["config_echo"]["sample_count"], 10);
}

#[test]
fn pre_cropped_directory_matches_ids() {
    let (_, scene) = scene(2);
    let dir = tempfile::tempdir().unwrap();
    for (t, truth) in scene.truth.iter().enumerate() {
        let pts: Vec<Point3> = scene
            .map
            .iter()
            .zip(&scene.labels)
            .filter(|(p, l)| matches!(l, PointLabel::Plate { target, .. } if *target == t) && p.z > 0.05)
            .map(|(p, _)| *p)
            .collect();
        write_pcd(&PointCloud::new(pts, ""), dir.path().join(format!("{}.pcd", truth.target_id)), PcdEncoding::Ascii)
            .unwrap();
    }
    let gps = dir.path().join("gps.csv");
    write_gps_poses(&scene.truth, &gps).unwrap();
    let config = RunConfig { gps_path: Some(gps), pre_cropped_dir: Some(dir.path().to_path_buf()), ..fast() };
    let out = run_evaluation(&config).unwrap();
    assert!(out.is_complete(), "{:?}", out.failures);
    for e in &out.estimates {
        let t = scene.truth.iter().find(|t| t.target_id == e.target_id).unwrap();
        assert!(e.position.horizontal_distance(&t.position) < 0.03);
    }

    std::fs::remove_file(dir.path().join("t2.pcd")).unwrap();
    assert!(matches!(run_evaluation(&config), Err(RunError::Pointcloud(_))));
}

#[test]
fn missing_target_is_reported_and_the_rest_evaluated() {
    let (_, scene) = scene(3);
    let mut gps = scene.truth.clone();
    gps.push(GpsTargetPose::new("t9", Point3::new(500.0, 500.0, 0.6)));
    let out = run_on_map(&fast(), &scene.map, &gps);
    assert_eq!(out.failures.len(), 1);
    let f = &out.failures[0];
    assert_eq!((f.target_id.as_str(), f.stage, f.code.as_str()), ("t9", Stage::Crop, "EmptyCrop"));
    assert_eq!(out.estimates.len(), 4);
    assert!(out.report.is_some());
    assert!(!out.is_complete());
}

#[test]
fn fewer_than_two_estimates_gives_null_metrics() {
    let (_, scene) = scene(4);
    let gps = vec![scene.truth[0].clone(), GpsTargetPose::new("far", Point3::new(-400.0, 0.0, 0.6))];
    let out = run_on_map(&fast(), &scene.map, &gps);
    assert!(out.report.is_none());
    let json: serde_json::Value = serde_json::from_str(&ReportDocument::from_outcome(&out).to_json()).unwrap();
    assert!(json["relative_error"].is_null());
    assert!(json["absolute_error"].is_null());
    assert!(json["registration"].is_null());
    assert_eq!(json["failures"][0]["code"], "EmptyCrop");
    assert!(json["per_target"][0]["error"].is_null());
}

#[test]
fn single_target_ground_truth_is_an_input_error() {
    let (_, scene) = scene(5);
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_inputs(dir.path(), &scene);
    let gps = dir.path().join("one.csv");
    write_gps_poses(&scene.truth[..1], &gps).unwrap();
    config.gps_path = Some(gps);
    assert!(matches!(run_evaluation(&config), Err(RunError::TooFewTargets(1))));
}

#[test]
fn config_problems_are_input_errors() {
    let bad = RunConfig { gps_path: Some("g.csv".into()), ..fast() };
    assert!(matches!(run_evaluation(&bad), Err(RunError::Config(_))));
    let missing = RunConfig {
        map_path: Some("/nonexistent/map.pcd".into()),
        gps_path: Some("/nonexistent/gps.csv".into()),
        ..fast()
    };
    assert!(matches!(run_evaluation(&missing), Err(RunError::GroundTruth(_))));
}

#[test]
fn tables_follow_report_ids() {
    let (_, scene) = scene(6);
    let out = run_on_map(&fast(), &scene.map, &scene.truth);
    let report = out.report.unwrap();
    let mut rel = Vec::new();
    write_relative_table(&[("sequence 1", &report)], &mut rel).unwrap();
    let rel = String::from_utf8(rel).unwrap();
    assert!(rel.starts_with("sequence,E_rel,sigma_rel,t1 & t2,t1 & t3,t1 & t4,t2 & t3,t2 & t4,t3 & t4\n"));
    let mut abs = Vec::new();
    write_absolute_table(&[("sequence 1", &report)], &mut abs).unwrap();
    let abs = String::from_utf8(abs).unwrap();
    assert!(abs.starts_with("sequence,E_abs,sigma_abs,t1,t2,t3,t4\n"));
    assert_eq!(abs.lines().nth(1).unwrap().split(',').count(), 7);
}
