use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_KMEANS_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances of points to their centroid.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Stops at an assignment fixpoint
/// or after [`MAX_KMEANS_ITERATIONS`]. A cluster that loses all its points
/// keeps its previous centroid.
///
/// Panics if `k` is zero or exceeds the number of points.
pub fn kmeans<V: AsRef<[f64]>>(points: &[V], k: usize, seed: u64) -> KMeansResult {
    let n = points.len();
    assert!(k >= 1 && k <= n, "k = {k} must be in 1..={n}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.push(points[first].as_ref().to_vec());
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_ref(), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // rounding can walk off the end onto a zero-weight point
            if nearest[pick] == 0.0 {
                pick = nearest.iter().rposition(|&w| w > 0.0).unwrap();
            }
            pick
        } else {
            // every remaining point coincides with a centre
            (0..n).find(|&i| !chosen[i]).unwrap()
        };
        chosen[pick] = true;
        let c = points[pick].as_ref().to_vec();
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }

    let dim = points[0].as_ref().len();
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    loop {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| {
                    sq_dist(p.as_ref(), &centroids[a]).total_cmp(&sq_dist(p.as_ref(), &centroids[b]))
                })
                .unwrap();
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        if !changed || iterations >= MAX_KMEANS_ITERATIONS {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p.as_ref()) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &c)| sq_dist(p.as_ref(), &centroids[c]))
        .sum();
    KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    }
}
