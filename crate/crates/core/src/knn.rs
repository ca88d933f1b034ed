//! Nearest-medoid classification of unseen series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::LabeledCluster;
use crate::dtw::dtw_distances_from;
use crate::label::CurveLabel;
use crate::series::NormalizedSeries;

/// Default maximum DTW distance to the nearest medoid.
pub const DEFAULT_KNN_THRESHOLD: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnnError {
    #[error("medoid index is empty")]
    EmptyIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedoidEntry {
    pub series: NormalizedSeries,
    pub label: CurveLabel,
    pub cluster_id: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MedoidIndex {
    pub entries: Vec<MedoidEntry>,
}

impl MedoidIndex {
    /// One entry per labeled cluster. `train` is indexed by leaf id.
    pub fn from_clusters(clusters: &[LabeledCluster], train: &[NormalizedSeries]) -> Self {
        Self {
            entries: clusters
                .iter()
                .map(|c| MedoidEntry {
                    series: train[c.medoid].clone(),
                    label: c.label,
                    cluster_id: c.id,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnPrediction {
    pub label: CurveLabel,
    /// Cluster id of the nearest medoid.
    pub cluster_id: usize,
    pub distance: f64,
}

/// 1-nearest-medoid label, or outlier when even the nearest medoid is
/// farther than `threshold`. Equal distances go to the lowest cluster id.
pub fn classify_knn(
    s: &NormalizedSeries,
    index: &MedoidIndex,
    threshold: f64,
) -> Result<KnnPrediction, KnnError> {
    let medoids: Vec<&[f64]> = index.entries.iter().map(|e| e.series.values()).collect();
    let distances = dtw_distances_from(s.values(), &medoids);
    let mut best: Option<(&MedoidEntry, f64)> = None;
    for (e, &d) in index.entries.iter().zip(&distances) {
        best = match best {
            Some((b, bd)) if bd < d || (bd == d && b.cluster_id <= e.cluster_id) => Some((b, bd)),
            _ => Some((e, d)),
        };
    }
    let (entry, distance) = best.ok_or(KnnError::EmptyIndex)?;
    Ok(KnnPrediction {
        label: if distance > threshold {
            CurveLabel::Outlier
        } else {
            entry.label
        },
        cluster_id: entry.cluster_id,
        distance,
    })
}
