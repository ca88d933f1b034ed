use serde::{Deserialize, Serialize};

use crate::dtw::DistanceMatrix;

/// One agglomeration step. Cluster ids follow the usual convention: leaves
/// are `0..n`, and the cluster created by merge `k` is `n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaf members of every cluster id, leaves first then merged clusters.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0..self.n_leaves).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut joined = out[m.cluster_a].clone();
            joined.extend_from_slice(&out[m.cluster_b]);
            joined.sort_unstable();
            out.push(joined);
        }
        out
    }
}

/// Complete-linkage agglomerative clustering.
///
/// Uses the nearest-neighbour chain algorithm, which is exact for complete
/// linkage because the criterion is reducible. Merges are reported in
/// non-decreasing height order.
pub fn linkage(d: &DistanceMatrix) -> Dendrogram {
    let n = d.len();
    if n <= 1 {
        return Dendrogram {
            n_leaves: n,
            merges: Vec::new(),
        };
    }
    let mut dist: Vec<f64> = (0..n).flat_map(|i| d.row(i).to_vec()).collect();
    let mut active = vec![true; n];
    let mut chain: Vec<usize> = Vec::with_capacity(n);
    // merges recorded as (slot kept, slot retired, height) in discovery order
    let mut raw: Vec<(usize, usize, f64)> = Vec::with_capacity(n - 1);

    while raw.len() < n - 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).expect("an active cluster"));
        }
        let top = *chain.last().unwrap();
        let prev = chain.len().checked_sub(2).map(|i| chain[i]);
        // nearest active neighbour; the previous chain element wins ties so
        // the chain always terminates
        let mut best = prev.unwrap_or(usize::MAX);
        let mut best_d = prev.map_or(f64::INFINITY, |p| dist[top * n + p]);
        for j in 0..n {
            if j == top || !active[j] {
                continue;
            }
            let dj = dist[top * n + j];
            if dj < best_d || best == usize::MAX {
                best = j;
                best_d = dj;
            }
        }
        if Some(best) == prev {
            chain.pop();
            chain.pop();
            let (keep, retire) = (top.min(best), top.max(best));
            for k in 0..n {
                if active[k] && k != keep && k != retire {
                    let v = dist[keep * n + k].max(dist[retire * n + k]);
                    dist[keep * n + k] = v;
                    dist[k * n + keep] = v;
                }
            }
            active[retire] = false;
            raw.push((keep, retire, best_d));
        } else {
            chain.push(best);
        }
    }

    // stable sort keeps a merge after the merges that built its inputs
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&x, &y| raw[x].2.total_cmp(&raw[y].2));

    // relabel slots to cluster ids with a union-find over slots
    let mut parent: Vec<usize> = (0..n).collect();
    let mut cluster_of_root: Vec<usize> = (0..n).collect();
    let mut root_size = vec![1usize; n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (k, &idx) in order.iter().enumerate() {
        let (s1, s2, height) = raw[idx];
        let r1 = find(&mut parent, s1);
        let r2 = find(&mut parent, s2);
        let (c1, c2) = (cluster_of_root[r1], cluster_of_root[r2]);
        let merged_size = root_size[r1] + root_size[r2];
        parent[r2] = r1;
        root_size[r1] = merged_size;
        cluster_of_root[r1] = n + k;
        merges.push(Merge {
            cluster_a: c1.min(c2),
            cluster_b: c1.max(c2),
            height,
            size: merged_size,
        });
    }
    Dendrogram {
        n_leaves: n,
        merges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_sizes() {
        let one = DistanceMatrix::from_fn(1, |_, _| 0.0);
        assert!(linkage(&one).merges.is_empty());
        let two = DistanceMatrix::from_fn(2, |_, _| 3.0);
        let t = linkage(&two);
        assert_eq!(
            t.merges,
            vec![Merge {
                cluster_a: 0,
                cluster_b: 1,
                height: 3.0,
                size: 2
            }]
        );
    }

    #[test]
    fn forced_order() {
        // AB = 1, AC = 10, BC = 10
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 10.0],
            vec![1.0, 0.0, 10.0],
            vec![10.0, 10.0, 0.0],
        ])
        .unwrap();
        let t = linkage(&d);
        assert_eq!(t.merges.len(), 2);
        assert_eq!((t.merges[0].cluster_a, t.merges[0].cluster_b), (0, 1));
        assert_eq!(t.merges[0].height, 1.0);
        assert_eq!((t.merges[1].cluster_a, t.merges[1].cluster_b), (2, 3));
        assert_eq!(t.merges[1].height, 10.0);
        assert_eq!(t.merges[1].size, 3);
    }

    #[test]
    fn complete_linkage_uses_farthest_pair() {
        // 0-1 close; 2 near 0 but far from 1
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 2.0, 9.0],
            vec![1.0, 0.0, 6.0, 9.0],
            vec![2.0, 6.0, 0.0, 5.0],
            vec![9.0, 9.0, 5.0, 0.0],
        ])
        .unwrap();
        let t = linkage(&d);
        let heights: Vec<f64> = t.merges.iter().map(|m| m.height).collect();
        assert_eq!(heights, vec![1.0, 5.0, 9.0]);
        let members = t.members();
        assert_eq!(members[5], vec![2, 3]);
    }

    #[test]
    fn equal_distances_still_terminate() {
        let d = DistanceMatrix::from_fn(6, |_, _| 1.0);
        let t = linkage(&d);
        assert_eq!(t.merges.len(), 5);
        assert_eq!(t.merges.last().unwrap().size, 6);
    }
}
