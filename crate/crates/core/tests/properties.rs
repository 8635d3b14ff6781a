use map_eval::estimation::{
    estimate_target, kmeans2, perpendicularity_gate, ransac_plane, svd_plane, EstimationConfig,
};
use map_eval::geometry::{PlaneModel, Point3, PointCloud, Transform2D};
use map_eval::scene::{generate_scene, PointLabel, SceneSpec, SceneTarget};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn target_cloud(yaw: f64, seed: u64) -> PointCloud {
    let spec = SceneSpec {
        targets: vec![SceneTarget::new("t", -0.7, 0.4, yaw)],
        ground_extent: 1.5,
        seed,
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec).unwrap();
    let pts = scene
        .map
        .points
        .iter()
        .zip(&scene.labels)
        .filter(|(p, l)| matches!(l, PointLabel::Plate { .. }) && p.z > 0.05)
        .map(|(p, _)| *p)
        .collect();
    PointCloud::new(pts, "t")
}

fn quick() -> EstimationConfig {
    EstimationConfig { sample_count: 8, ransac_iterations: 300, ..EstimationConfig::default() }
}

fn squared(plane: &PlaneModel, pts: &[Point3]) -> f64 {
    pts.iter().map(|p| plane.signed_distance(p).powi(2)).sum()
}

fn point() -> impl Strategy<Value = Point3> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn direction() -> impl Strategy<Value = Vector3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_map(|(x, y, z)| Vector3::new(x, y, z))
        .prop_filter("non-zero", |v| v.norm() > 0.1)
        .prop_map(|v| v.normalize())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimate_is_rigidly_equivariant(yaw in 0.0..90.0f64, seed in 0u64..500, rot in -3.1..3.1f64, tx in -40.0..40.0f64, ty in -40.0..40.0f64) {
        let cloud = target_cloud(yaw, seed);
        let t = Transform2D::from_angle(rot, Vector2::new(tx, ty));
        let moved = cloud.with_points(cloud.iter().map(|p| t.apply(p)).collect());
        let cfg = quick();
        let a = estimate_target(&cloud, &PlaneModel::ground(), "t", seed, &cfg);
        let b = estimate_target(&moved, &PlaneModel::ground(), "t", seed, &cfg);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!(t.apply(&a.position).distance(&b.position) < 1e-6),
            (Err(a), Err(b)) => prop_assert_eq!(a.name(), b.name()),
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn estimates_pass_their_own_gate(yaw in 0.0..90.0f64, seed in 0u64..500) {
        let cfg = quick();
        if let Ok(e) = estimate_target(&target_cloud(yaw, seed), &PlaneModel::ground(), "t", seed, &cfg) {
            let g = perpendicularity_gate(&e.plane_pair[0], &e.plane_pair[1], &PlaneModel::ground(), cfg.perpendicularity_tolerance);
            prop_assert!(g.passed);
            let n = e.sample_positions.len() as f64;
            let mean_y = e.sample_positions.iter().map(|p| p.y).sum::<f64>() / n;
            prop_assert!((mean_y - e.position.y).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_partitions_input(yaw in 0.0..90.0f64, seed in 0u64..500) {
        let cloud = target_cloud(yaw, seed);
        let cfg = EstimationConfig::default();
        let (a, b) = kmeans2(&cloud, seed, &cfg).unwrap();
        prop_assert_eq!(a.len() + b.len(), cloud.len());
        prop_assert!(a.len() >= cfg.min_points_per_cluster && b.len() >= cfg.min_points_per_cluster);
        let mut all: Vec<Point3> = a.points.iter().chain(&b.points).copied().collect();
        let mut input = cloud.points.clone();
        let key = |p: &Point3| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
        all.sort_by_key(key);
        input.sort_by_key(key);
        prop_assert_eq!(all, input);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_beats_random_planes(pts in prop::collection::vec(point(), 3..=8), normals in prop::collection::vec(direction(), 500), offsets in prop::collection::vec(-3.0..3.0f64, 500)) {
        if let Ok(fit) = svd_plane(&pts) {
            let best = squared(&fit, &pts);
            for (n, d) in normals.iter().zip(&offsets) {
                let candidate = PlaneModel::new(*n, *d, 0).unwrap();
                prop_assert!(best <= squared(&candidate, &pts) + 1e-12);
            }
        }
    }

    #[test]
    fn svd_recovers_constructed_plane(n in direction(), origin in point(), coords in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 4..40)) {
        let u = n.cross(&Vector3::new(0.31, -0.52, 0.79)).normalize();
        let v = n.cross(&u);
        let pts: Vec<Point3> = coords.iter().map(|(a, b)| Point3::from(origin.to_vector() + u * *a + v * *b)).collect();
        if let Ok(fit) = svd_plane(&pts) {
            let truth = PlaneModel::through_point(n, &origin, 0).unwrap();
            prop_assert!(fit.normal().cross(&truth.normal()).norm() < 1e-9);
            prop_assert!(pts.iter().all(|p| fit.distance(p) < 1e-9));
        }
    }

    #[test]
    fn ransac_inliers_are_exactly_the_close_points(pts in prop::collection::vec(point(), 25..120), seed in 0u64..1000) {
        let cfg = EstimationConfig { min_points_per_cluster: 3, ransac_iterations: 50, ..EstimationConfig::default() };
        let cloud = PointCloud::new(pts, "r");
        if let Ok((inliers, model)) = ransac_plane(&cloud, seed, &cfg) {
            let brute: Vec<Point3> = cloud.iter().copied().filter(|p| model.distance(p) <= cfg.ransac_inlier_threshold).collect();
            prop_assert_eq!(inliers.points, brute);
        }
    }
}
