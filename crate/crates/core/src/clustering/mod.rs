//! Bottom-up structure discovery over DTW distances: complete-linkage
//! dendrogram, threshold cut, medoids and purity-based cluster labels.
//! K-means and silhouette scores are kept alongside as diagnostics.

mod kmeans;
mod linkage;
mod silhouette;

pub use kmeans::{kmeans, KMeansResult, MAX_KMEANS_ITERATIONS};
pub use linkage::{linkage, Dendrogram, Merge};
pub use silhouette::{
    euclidean, silhouette, silhouette_matrix, silhouette_samples, silhouette_vectors,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw::DistanceMatrix;
use crate::label::CurveLabel;

/// Default dendrogram cut height.
pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 30.0;
/// Default fraction of members that must share the medoid's label.
pub const DEFAULT_PURITY_THRESHOLD: f64 = 0.55;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("silhouette needs at least two non-empty clusters, got {0}")]
    InsufficientClusters(usize),
    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },
}

/// Partition of the dendrogram leaves obtained by cutting at a height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatClustering {
    pub threshold: f64,
    /// Cluster id of every leaf.
    pub assignments: Vec<usize>,
    /// Leaf indices of every cluster, ascending.
    pub clusters: Vec<Vec<usize>>,
}

/// Cuts the tree so clusters are the maximal subtrees whose merge height is
/// at most `threshold`. Cluster ids follow the order of each cluster's
/// lowest leaf.
pub fn flatten(tree: &Dendrogram, threshold: f64) -> FlatClustering {
    let n = tree.n_leaves;
    let mut parent: Vec<usize> = (0..n + tree.merges.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (k, m) in tree.merges.iter().enumerate() {
        if m.height > threshold {
            continue;
        }
        let node = n + k;
        let ra = find(&mut parent, m.cluster_a);
        let rb = find(&mut parent, m.cluster_b);
        parent[ra] = node;
        parent[rb] = node;
    }
    let mut id_of_root = std::collections::HashMap::new();
    let mut assignments = Vec::with_capacity(n);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let id = *id_of_root.entry(root).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[id].push(leaf);
        assignments.push(id);
    }
    FlatClustering {
        threshold,
        assignments,
        clusters,
    }
}

/// The member with the smallest summed distance to the other members;
/// ties go to the lowest leaf index. Panics on an empty slice.
pub fn medoid(members: &[usize], d: &DistanceMatrix) -> usize {
    let mut best = None;
    for &i in members {
        let total: f64 = members.iter().map(|&j| d.get(i, j)).sum();
        match best {
            Some((b, t)) if total > t || (total == t && i > b) => {}
            _ => best = Some((i, total)),
        }
    }
    best.expect("medoid of an empty cluster").0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCluster {
    pub id: usize,
    pub medoid: usize,
    /// Curve-fit label of the medoid.
    pub medoid_label: CurveLabel,
    /// Final label: the medoid's, or outlier if purity is too low.
    pub label: CurveLabel,
    /// Fraction of members whose curve-fit label equals the medoid's.
    pub purity: f64,
    pub members: Vec<usize>,
}

impl LabeledCluster {
    pub fn demoted(&self) -> bool {
        self.label != self.medoid_label
    }
}

/// Labels each cluster with its medoid's curve-fit label, demoting the
/// whole cluster to outlier unless strictly more than `purity_threshold` of
/// its members share that label.
pub fn label_clusters(
    flat: &FlatClustering,
    fit_labels: &[CurveLabel],
    purity_threshold: f64,
    d: &DistanceMatrix,
) -> Result<Vec<LabeledCluster>, ClusterError> {
    if fit_labels.len() != flat.assignments.len() {
        return Err(ClusterError::LabelCount {
            expected: flat.assignments.len(),
            got: fit_labels.len(),
        });
    }
    Ok(flat
        .clusters
        .iter()
        .enumerate()
        .map(|(id, members)| {
            let m = medoid(members, d);
            let medoid_label = fit_labels[m];
            let matching = members
                .iter()
                .filter(|&&i| fit_labels[i] == medoid_label)
                .count();
            let purity = matching as f64 / members.len() as f64;
            let label = if purity > purity_threshold {
                medoid_label
            } else {
                CurveLabel::Outlier
            };
            LabeledCluster {
                id,
                medoid: m,
                medoid_label,
                label,
                purity,
                members: members.clone(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point() -> DistanceMatrix {
        DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 10.0],
            vec![1.0, 0.0, 10.0],
            vec![10.0, 10.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn flatten_extremes_and_forced_cut() {
        let t = linkage(&three_point());
        assert_eq!(flatten(&t, 0.5).clusters, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(flatten(&t, 100.0).clusters, vec![vec![0, 1, 2]]);
        let f = flatten(&t, 5.0);
        assert_eq!(f.clusters, vec![vec![0, 1], vec![2]]);
        assert_eq!(f.assignments, vec![0, 0, 1]);
        // merge heights are inclusive
        assert_eq!(flatten(&t, 1.0).clusters, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn medoid_cases() {
        let d = three_point();
        assert_eq!(medoid(&[2], &d), 2);
        assert_eq!(medoid(&[0, 1], &d), 0);
        // collinear points at 0, 1, 3: the middle one minimizes the sum
        let line = DistanceMatrix::from_fn(3, |i, j| {
            let pos = [0.0, 1.0, 3.0];
            f64::abs(pos[i] - pos[j])
        });
        let sums: Vec<f64> = (0..3).map(|i| (0..3).map(|j| line.get(i, j)).sum()).collect();
        let oracle = (0..3).min_by(|&a, &b| sums[a].total_cmp(&sums[b])).unwrap();
        assert_eq!(oracle, 1);
        assert_eq!(medoid(&[0, 1, 2], &line), oracle);
    }

    fn single_cluster(labels: &[CurveLabel]) -> Vec<LabeledCluster> {
        let n = labels.len();
        let d = DistanceMatrix::from_fn(n, |i, j| if i == 0 || j == 0 { 1.0 } else { 2.0 });
        let flat = FlatClustering {
            threshold: 5.0,
            assignments: vec![0; n],
            clusters: vec![(0..n).collect()],
        };
        label_clusters(&flat, labels, DEFAULT_PURITY_THRESHOLD, &d).unwrap()
    }

    #[test]
    fn purity_rule() {
        use CurveLabel::*;
        let mut labels = vec![Gaussian; 6];
        labels.extend(vec![Oscillation; 4]);
        let c = &single_cluster(&labels)[0];
        assert_eq!(c.medoid, 0);
        assert!((c.purity - 0.6).abs() < 1e-12);
        assert_eq!(c.label, Gaussian);
        assert!(!c.demoted());

        let mut labels = vec![Gaussian; 5];
        labels.extend(vec![Oscillation; 5]);
        let c = &single_cluster(&labels)[0];
        assert!((c.purity - 0.5).abs() < 1e-12);
        assert_eq!(c.label, Outlier);
        assert!(c.demoted());

        let c = &single_cluster(&[Dying])[0];
        assert_eq!((c.purity, c.label), (1.0, Dying));
    }

    #[test]
    fn label_count_checked() {
        let flat = FlatClustering {
            threshold: 1.0,
            assignments: vec![0, 0],
            clusters: vec![vec![0, 1]],
        };
        let d = DistanceMatrix::from_fn(2, |_, _| 1.0);
        assert!(label_clusters(&flat, &[CurveLabel::Dying], 0.55, &d).is_err());
    }
}
