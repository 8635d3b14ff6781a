//! Two-cluster Lloyd's k-means for splitting a target into its plates.

use std::cmp::Ordering;

use nalgebra::Vector3;
use rand::Rng as _;

use super::EstimationError;
use crate::geometry::Point3;
use crate::seed::Rng;

/// Cluster membership of each input point (`false` = first, `true` = second)
/// with the two final centroids, already in lexicographic centroid order.
#[derive(Debug, Clone)]
pub(crate) struct TwoMeans {
    pub second: Vec<bool>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub centroids: [Vector3<f64>; 2],
}

fn lexicographic(a: &Vector3<f64>, b: &Vector3<f64>) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

fn assign(points: &[Vector3<f64>], centroids: &[Vector3<f64>; 2], out: &mut [bool]) {
    for (slot, p) in out.iter_mut().zip(points) {
        *slot = (p - centroids[1]).norm_squared() < (p - centroids[0]).norm_squared();
    }
}

fn update(points: &[Vector3<f64>], membership: &[bool], previous: &[Vector3<f64>; 2]) -> [Vector3<f64>; 2] {
    let mut sums = [Vector3::zeros(); 2];
    let mut counts = [0usize; 2];
    for (p, &m) in points.iter().zip(membership) {
        sums[m as usize] += p;
        counts[m as usize] += 1;
    }
    // An emptied cluster keeps its previous centroid.
    [0, 1].map(|k| if counts[k] == 0 { previous[k] } else { sums[k] / counts[k] as f64 })
}

pub(crate) fn two_means(
    points: &[Point3],
    min_cluster: usize,
    max_iterations: usize,
    tolerance: f64,
    rng: &mut Rng,
) -> Result<TwoMeans, EstimationError> {
    let n = points.len();
    if n < 2 {
        return Err(EstimationError::TooFewPoints { needed: 2 * min_cluster.max(1), found: n });
    }
    let vecs: Vec<Vector3<f64>> = points.iter().map(|p| p.to_vector()).collect();

    // First seed uniform; second is the point of greatest squared distance
    // from it (lowest index on ties).
    let first = vecs[rng.random_range(0..n)];
    let (second_idx, farthest) = vecs
        .iter()
        .map(|p| (p - first).norm_squared())
        .enumerate()
        .fold((0, 0.0), |best, (i, d)| if d > best.1 { (i, d) } else { best });
    if farthest.is_nan() || farthest <= 0.0 {
        return Err(EstimationError::DegenerateCluster { sizes: [n, 0] });
    }
    if n < 2 * min_cluster {
        return Err(EstimationError::TooFewPoints { needed: 2 * min_cluster, found: n });
    }
    let mut centroids = [first, vecs[second_idx]];

    let mut membership = vec![false; n];
    for _ in 0..max_iterations {
        assign(&vecs, &centroids, &mut membership);
        let next = update(&vecs, &membership, &centroids);
        let shift = (next[0] - centroids[0]).norm().max((next[1] - centroids[1]).norm());
        centroids = next;
        if shift < tolerance {
            break;
        }
    }
    assign(&vecs, &centroids, &mut membership);

    let second_count = membership.iter().filter(|&&m| m).count();
    let sizes = [n - second_count, second_count];
    if sizes.iter().any(|&s| s < min_cluster.max(1)) {
        return Err(EstimationError::DegenerateCluster { sizes });
    }

    if lexicographic(&centroids[1], &centroids[0]) == Ordering::Less {
        centroids.swap(0, 1);
        membership.iter_mut().for_each(|m| *m = !*m);
    }
    Ok(TwoMeans { second: membership, centroids })
}
