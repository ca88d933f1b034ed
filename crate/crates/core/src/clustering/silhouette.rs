use std::collections::BTreeMap;

use super::ClusterError;
use crate::dtw::DistanceMatrix;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-sample silhouette values for an arbitrary distance. Samples in
/// singleton clusters score 0.
pub fn silhouette_samples(
    assignments: &[usize],
    dist: impl Fn(usize, usize) -> f64,
) -> Result<Vec<f64>, ClusterError> {
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in assignments.iter().enumerate() {
        clusters.entry(c).or_default().push(i);
    }
    if clusters.len() < 2 {
        return Err(ClusterError::InsufficientClusters(clusters.len()));
    }
    Ok((0..assignments.len())
        .map(|i| {
            let own = &clusters[&assignments[i]];
            if own.len() == 1 {
                return 0.0;
            }
            let a = own.iter().filter(|&&j| j != i).map(|&j| dist(i, j)).sum::<f64>()
                / (own.len() - 1) as f64;
            let b = clusters
                .iter()
                .filter(|(&c, _)| c != assignments[i])
                .map(|(_, members)| {
                    members.iter().map(|&j| dist(i, j)).sum::<f64>() / members.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean silhouette score for an arbitrary distance.
pub fn silhouette(
    assignments: &[usize],
    dist: impl Fn(usize, usize) -> f64,
) -> Result<f64, ClusterError> {
    let samples = silhouette_samples(assignments, dist)?;
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Mean silhouette with Euclidean distance between raw vectors.
pub fn silhouette_vectors<V: AsRef<[f64]>>(
    assignments: &[usize],
    points: &[V],
) -> Result<f64, ClusterError> {
    silhouette(assignments, |i, j| {
        euclidean(points[i].as_ref(), points[j].as_ref())
    })
}

/// Mean silhouette over a precomputed distance matrix (for example DTW).
pub fn silhouette_matrix(assignments: &[usize], d: &DistanceMatrix) -> Result<f64, ClusterError> {
    silhouette(assignments, |i, j| d.get(i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn separated_blobs_score_high() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..8 {
            pts.push(vec![0.1 * (i % 3) as f64, 0.1 * (i / 3) as f64]);
            labels.push(0);
            pts.push(vec![50.0 + 0.1 * (i % 3) as f64, 0.1 * (i / 3) as f64]);
            labels.push(1);
        }
        assert!(silhouette_vectors(&labels, &pts).unwrap() > 0.9);
    }

    #[test]
    fn random_labels_score_near_zero() {
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let labels: Vec<usize> = (0..60).map(|_| rng.random_range(0..3)).collect();
            let s = silhouette_vectors(&labels, &pts).unwrap();
            assert!(s.abs() < 0.2, "seed {seed}: {s}");
        }
    }

    #[test]
    fn adversarial_assignment_is_negative() {
        // two tight groups, each split across both labels
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let labels = vec![0, 1, 0, 1];
        assert!(silhouette_vectors(&labels, &pts).unwrap() < 0.0);
    }

    #[test]
    fn needs_two_clusters() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            silhouette_vectors(&[3, 3], &pts),
            Err(ClusterError::InsufficientClusters(1))
        );
    }

    #[test]
    fn singletons_score_zero() {
        let pts = vec![vec![0.0], vec![0.2], vec![9.0]];
        let s = silhouette_samples(&[0, 0, 1], |i, j| euclidean(&pts[i], &pts[j])).unwrap();
        assert_eq!(s[2], 0.0);
    }

    proptest! {
        #[test]
        fn bounded(
            pts in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 3..25),
            seed in 0u64..1000,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<usize> = (0..pts.len()).map(|_| rng.random_range(0..4)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let s = silhouette_samples(&labels, |i, j| euclidean(&pts[i], &pts[j])).unwrap();
            for v in s {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}
