//! Dynamic time warping with squared pointwise cost, and the pairwise
//! distance matrix built from it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::NormalizedSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DtwError {
    #[error("series {index} has length {len}, expected {expected}")]
    LengthMismatch {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("distance matrix needs at least one series")]
    Empty,
    #[error("matrix is not square: {rows} rows, row {row} has {len} entries")]
    NotSquare { rows: usize, row: usize, len: usize },
}

/// DTW distance: the square root of the minimum, over monotone warping
/// paths from `(0, 0)` to `(n−1, m−1)`, of the summed squared differences.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { f64::INFINITY };
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &ai in a {
        let mut left = f64::INFINITY;
        for (j, &bj) in b.iter().enumerate() {
            let d = ai - bj;
            left = d * d + min(min(prev[j], prev[j + 1]), left);
            curr[j + 1] = left;
        }
        std::mem::swap(&mut prev, &mut curr);
        prev[0] = f64::INFINITY;
    }
    prev[m].sqrt()
}

/// Inputs are finite, so the NaN handling of `f64::min` is not needed.
#[inline(always)]
fn min(a: f64, b: f64) -> f64 {
    if b < a {
        b
    } else {
        a
    }
}

const LANES: usize = 4;

/// Four independent DTW computations against the same `a`, interleaved so
/// the per-cell dependency chains overlap. Each lane performs exactly the
/// operations of [`dtw_distance`], so results are bit-identical to it.
fn dtw_lanes(a: &[f64], bs: [&[f64]; LANES]) -> [f64; LANES] {
    let m = bs[0].len();
    debug_assert!(bs.iter().all(|b| b.len() == m));
    let mut prev = vec![[f64::INFINITY; LANES]; m + 1];
    let mut curr = vec![[f64::INFINITY; LANES]; m + 1];
    prev[0] = [0.0; LANES];
    for &ai in a {
        let mut left = [f64::INFINITY; LANES];
        for j in 0..m {
            let (diag, up) = (prev[j], prev[j + 1]);
            for k in 0..LANES {
                let d = ai - bs[k][j];
                left[k] = d * d + min(min(diag[k], up[k]), left[k]);
            }
            curr[j + 1] = left;
        }
        std::mem::swap(&mut prev, &mut curr);
        prev[0] = [f64::INFINITY; LANES];
    }
    prev[m].map(f64::sqrt)
}

/// Distances from `a` to every series in `bs`. Equal to calling [`dtw_distance`] on each pair.
pub fn dtw_distances_from(a: &[f64], bs: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(bs.len());
    let mut chunks = bs.chunks_exact(LANES);
    for c in &mut chunks {
        if c.iter().all(|b| b.len() == c[0].len()) && !c[0].is_empty() && !a.is_empty() {
            out.extend(dtw_lanes(a, std::array::from_fn(|k| c[k])));
        } else {
            out.extend(c.iter().map(|b| dtw_distance(a, b)));
        }
    }
    out.extend(chunks.remainder().iter().map(|b| dtw_distance(a, b)));
    out
}

/// DTW restricted to a Sakoe-Chiba band of half-width `window` around the
/// (length-scaled) diagonal. `None` means unconstrained.
pub fn dtw_distance_windowed(a: &[f64], b: &[f64], window: Option<usize>) -> f64 {
    let Some(w) = window else {
        return dtw_distance(a, b);
    };
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return if n == m { 0.0 } else { f64::INFINITY };
    }
    // widen the band so the end cell is always reachable
    let w = w.max(n.abs_diff(m));
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr.fill(f64::INFINITY);
        let centre = (i - 1) * m / n;
        let (lo, hi) = (centre.saturating_sub(w) + 1, (centre + w + 1).min(m));
        let ai = a[i - 1];
        for j in lo..=hi {
            let d = ai - b[j - 1];
            curr[j] = d * d + min(min(prev[j - 1], prev[j]), curr[j - 1]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[m].sqrt()
}

/// Symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from full rows. Rows must be square; the upper
    /// triangle is mirrored into the lower one and the diagonal zeroed.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DtwError> {
        let n = rows.len();
        if n == 0 {
            return Err(DtwError::Empty);
        }
        let mut entries = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(DtwError::NotSquare {
                    rows: n,
                    row: i,
                    len: row.len(),
                });
            }
            for j in i + 1..n {
                entries[i * n + j] = row[j];
                entries[j * n + i] = row[j];
            }
        }
        Ok(Self { n, entries })
    }

    /// Builds a matrix by evaluating `f(i, j)` for every `i < j`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        Self { n, entries }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Square CSV, one row per line, no header.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for i in 0..self.n {
            w.write_record(self.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pairwise DTW distances. Pairs are evaluated in parallel on the current
/// rayon pool; each entry is computed independently so the result does not
/// depend on scheduling.
pub fn distance_matrix(xs: &[NormalizedSeries]) -> Result<DistanceMatrix, DtwError> {
    distance_matrix_windowed(xs, None)
}

pub fn distance_matrix_windowed(
    xs: &[NormalizedSeries],
    window: Option<usize>,
) -> Result<DistanceMatrix, DtwError> {
    let expected = xs.first().ok_or(DtwError::Empty)?.len();
    if let Some((index, s)) = xs.iter().enumerate().find(|(_, s)| s.len() != expected) {
        return Err(DtwError::LengthMismatch {
            index,
            len: s.len(),
            expected,
        });
    }
    let n = xs.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = xs[i].values();
            if window.is_some() {
                return (i + 1..n)
                    .map(|j| dtw_distance_windowed(a, xs[j].values(), window))
                    .collect();
            }
            let bs: Vec<&[f64]> = xs[i + 1..].iter().map(|s| s.values()).collect();
            dtw_distances_from(a, &bs)
        })
        .collect();
    let mut entries = vec![0.0; n * n];
    for (i, row) in upper.into_iter().enumerate() {
        for (k, d) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SeriesId;
    use proptest::prelude::*;

    /// Enumerates every monotone warping path and returns the cheapest.
    fn brute_force(a: &[f64], b: &[f64]) -> f64 {
        fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let d = a[i] - b[j];
            let acc = acc + d * d;
            if i + 1 == a.len() && j + 1 == b.len() {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, acc, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best.sqrt()
    }

    fn series(values: Vec<f64>) -> NormalizedSeries {
        NormalizedSeries::from_unit_values(SeriesId::new("t", "m", "s"), values).unwrap()
    }

    #[test]
    fn known_values() {
        assert_eq!(dtw_distance(&[0.0], &[1.0]), 1.0);
        let a = [0.0, 1.0, 0.0];
        let b = [0.0, 0.5, 1.0, 0.5, 0.0];
        assert!((dtw_distance(&a, &b) - brute_force(&a, &b)).abs() < 1e-12);
        // 0.5 must pair with either 0 or 1 on the other side
        assert!((dtw_distance(&a, &b) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn duplicating_a_point_costs_nothing() {
        let a = [0.1, 0.4, 0.9, 0.3, 0.2];
        let b = [0.1, 0.4, 0.9, 0.9, 0.3, 0.2];
        assert_eq!(dtw_distance(&a, &b), 0.0);
    }

    #[test]
    fn wide_window_equals_unconstrained() {
        let a = [0.1, 0.4, 0.9, 0.3, 0.2, 0.7];
        let b = [0.3, 0.2, 0.8, 0.1, 0.6, 0.4];
        assert_eq!(
            dtw_distance_windowed(&a, &b, Some(10)),
            dtw_distance(&a, &b)
        );
        let diag: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        assert!((dtw_distance_windowed(&a, &b, Some(0)) - diag).abs() < 1e-12);
        assert!(dtw_distance_windowed(&a, &b, Some(1)) >= dtw_distance(&a, &b));
    }

    #[test]
    fn matrix_shapes() {
        let one = distance_matrix(&[series(vec![0.5, 1.0])]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.get(0, 0), 0.0);
        let s = series(vec![0.2, 1.0, 0.4]);
        let two = distance_matrix(&[s.clone(), s]).unwrap();
        assert!(two.row(0).iter().chain(two.row(1)).all(|&v| v == 0.0));
        assert!(matches!(distance_matrix(&[]), Err(DtwError::Empty)));
        assert!(matches!(
            distance_matrix(&[series(vec![1.0, 0.0]), series(vec![1.0])]),
            Err(DtwError::LengthMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn matrix_matches_sequential_recomputation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // 11 series exercise both the four-lane path and the remainder
        let xs: Vec<_> = (0..11)
            .map(|_| series((0..30).map(|_| rng.random_range(0.0..=1.0)).collect()))
            .collect();
        let m = distance_matrix(&xs).unwrap();
        for i in 0..11 {
            for j in 0..11 {
                assert_eq!(m.get(i, j), m.get(j, i));
                let expect = if i == j { 0.0 } else { dtw_distance(xs[i].values(), xs[j].values()) };
                assert_eq!(m.get(i, j), expect);
            }
        }
    }

    #[test]
    fn lanes_match_scalar_bitwise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..57).map(|_| rng.random_range(0.0..=1.0)).collect())
            .collect();
        let got = dtw_lanes(&xs[0], [&xs[1], &xs[2], &xs[3], &xs[4]]);
        for k in 0..LANES {
            assert_eq!(got[k].to_bits(), dtw_distance(&xs[0], &xs[k + 1]).to_bits());
        }
    }

    #[test]
    fn csv_export_is_square() {
        let m = DistanceMatrix::from_fn(3, |i, j| (i + j) as f64);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "0,1,2\n1,0,3\n2,3,0\n");
    }

    proptest! {
        #[test]
        fn agrees_with_enumeration(
            a in proptest::collection::vec(0.0f64..=1.0, 1..=6),
            b in proptest::collection::vec(0.0f64..=1.0, 1..=6),
        ) {
            let fast = dtw_distance(&a, &b);
            prop_assert!((fast - brute_force(&a, &b)).abs() <= 1e-12);
            prop_assert_eq!(fast, dtw_distance(&b, &a));
        }

        #[test]
        fn bounded_by_aligned_l2(
            pair in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..40),
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
            let l2 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            let d = dtw_distance(&a, &b);
            prop_assert!(d >= 0.0 && d <= l2 + 1e-12);
            prop_assert_eq!(dtw_distance(&a, &a), 0.0);
        }
    }
}
