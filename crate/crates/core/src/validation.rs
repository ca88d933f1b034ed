//! The two-method experiment: fit-label every series, cluster a training
//! split, label clusters by medoid and purity, classify the held-out split
//! by nearest medoid and measure how often both methods agree.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{
    flatten, label_clusters, linkage, ClusterError, Dendrogram, FlatClustering, LabeledCluster,
    DEFAULT_CLUSTER_THRESHOLD, DEFAULT_PURITY_THRESHOLD,
};
use crate::curve_fit::{
    classify_by_fit, detect_constant, FitConfig, FitResult, DEFAULT_DYING_EPSILON,
    DEFAULT_FIT_ERROR_THRESHOLD,
};
use crate::dtw::{distance_matrix, DistanceMatrix, DtwError};
use crate::knn::{classify_knn, KnnError, MedoidIndex, DEFAULT_KNN_THRESHOLD};
use crate::label::CurveLabel;
use crate::series::{preprocess, NormalizedSeries, RawSeries, SeriesError, SeriesId, DEFAULT_SIM_LENGTH};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.70;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Dtw(#[from] DtwError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Knn(#[from] KnnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim_length: usize,
    /// Fraction of series used for training.
    pub split_ratio: f64,
    pub cluster_threshold: f64,
    pub purity_threshold: f64,
    pub knn_threshold: f64,
    pub fit_error_threshold: f64,
    pub dying_epsilon: f64,
    pub rng_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sim_length: DEFAULT_SIM_LENGTH,
            split_ratio: DEFAULT_SPLIT_RATIO,
            cluster_threshold: DEFAULT_CLUSTER_THRESHOLD,
            purity_threshold: DEFAULT_PURITY_THRESHOLD,
            knn_threshold: DEFAULT_KNN_THRESHOLD,
            fit_error_threshold: DEFAULT_FIT_ERROR_THRESHOLD,
            dying_epsilon: DEFAULT_DYING_EPSILON,
            rng_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Thresholds must be finite and non-negative; a zero cut height is
    /// allowed and leaves every distinct series in its own cluster.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.sim_length < 2 {
            return Err(ValidationError::InvalidConfig(format!(
                "sim_length must be at least 2, got {}",
                self.sim_length
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(ValidationError::InvalidConfig(format!(
                "split_ratio must lie in (0, 1), got {}",
                self.split_ratio
            )));
        }
        for (name, v) in [
            ("cluster_threshold", self.cluster_threshold),
            ("purity_threshold", self.purity_threshold),
            ("knn_threshold", self.knn_threshold),
            ("fit_error_threshold", self.fit_error_threshold),
            ("dying_epsilon", self.dying_epsilon),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ValidationError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.purity_threshold >= 1.0 {
            return Err(ValidationError::InvalidConfig(format!(
                "purity_threshold must be below 1, got {}",
                self.purity_threshold
            )));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            fit_error_threshold: self.fit_error_threshold,
            dying_epsilon: self.dying_epsilon,
        }
    }
}

/// Seeded uniform split of `0..n` into (train, test) index lists, both
/// ascending. The test side gets `floor(n · (1 − ratio))` items.
pub fn split(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_test = ((n as f64) * (1.0 - ratio) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Rows are curve-fit labels, columns the clustering/nearest-medoid labels,
/// both in [`CurveLabel::ALL`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[usize; 7]; 7],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[usize; 7]; 7]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, expected: CurveLabel, predicted: CurveLabel) {
        self.counts[expected.index()][predicted.index()] += 1;
    }

    pub fn get(&self, expected: CurveLabel, predicted: CurveLabel) -> usize {
        self.counts[expected.index()][predicted.index()]
    }

    pub fn counts(&self) -> &[[usize; 7]; 7] {
        &self.counts
    }

    pub fn row_total(&self, expected: CurveLabel) -> usize {
        self.counts[expected.index()].iter().sum()
    }

    pub fn correct(&self, expected: CurveLabel) -> usize {
        self.get(expected, expected)
    }

    pub fn incorrect(&self, expected: CurveLabel) -> usize {
        self.row_total(expected) - self.correct(expected)
    }

    pub fn trace(&self) -> usize {
        (0..7).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Columns: label, one per predicted label, total, correct, incorrect.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend(CurveLabel::ALL.iter().map(|l| l.short().to_string()));
        header.extend(["total", "correct", "incorrect"].map(String::from));
        w.write_record(&header)?;
        for label in CurveLabel::ALL {
            let mut row = vec![label.as_str().to_string()];
            row.extend(self.counts[label.index()].iter().map(|c| c.to_string()));
            row.push(self.row_total(label).to_string());
            row.push(self.correct(label).to_string());
            row.push(self.incorrect(label).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct ConfusionRow {
    label: CurveLabel,
    counts: [usize; 7],
    total: usize,
    correct: usize,
    incorrect: usize,
}

impl Serialize for ConfusionMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View {
            columns: [CurveLabel; 7],
            rows: Vec<ConfusionRow>,
            total: usize,
            correct: usize,
        }
        View {
            columns: CurveLabel::ALL,
            rows: CurveLabel::ALL
                .iter()
                .map(|&label| ConfusionRow {
                    label,
                    counts: self.counts[label.index()],
                    total: self.row_total(label),
                    correct: self.correct(label),
                    incorrect: self.incorrect(label),
                })
                .collect(),
            total: self.total(),
            correct: self.trace(),
        }
        .serialize(serializer)
    }
}

/// Percentage of entries on the diagonal.
pub fn agreement(cm: &ConfusionMatrix) -> Result<f64, ValidationError> {
    match cm.total() {
        0 => Err(ValidationError::EmptyMatrix),
        total => Ok(100.0 * cm.trace() as f64 / total as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub size: usize,
    pub medoid: SeriesId,
    pub medoid_label: CurveLabel,
    pub label: CurveLabel,
    pub purity: f64,
    pub demoted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPrediction {
    pub series: SeriesId,
    pub fit_label: CurveLabel,
    pub predicted: CurveLabel,
    /// Nearest medoid's cluster, absent when a rule or an empty index decided.
    pub cluster_id: Option<usize>,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub dataset_tag: String,
    pub config: ExperimentConfig,
    pub n_series: usize,
    pub train_size: usize,
    /// Training series that entered clustering (constants removed).
    pub clustered_size: usize,
    pub test_size: usize,
    pub cluster_count: usize,
    pub clusters: Vec<ClusterSummary>,
    /// Ids of clusters whose purity was too low to keep the medoid label.
    pub demoted_clusters: Vec<usize>,
    /// Percentage of clustered training series whose fit label equals their
    /// cluster's final label.
    pub training_agreement: Option<f64>,
    /// Percentage of test series whose nearest-medoid label equals their
    /// fit label.
    pub test_agreement: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Everything an experiment produced, for reporting and export.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ValidationReport,
    pub series: Vec<NormalizedSeries>,
    /// Curve-fit result of every input series.
    pub fits: Vec<FitResult>,
    /// Input indices of the clustered training series; leaf `i` of the
    /// dendrogram is `series[clustered[i]]`.
    pub clustered: Vec<usize>,
    pub test: Vec<usize>,
    pub distances: Option<DistanceMatrix>,
    pub dendrogram: Dendrogram,
    pub flat: FlatClustering,
    pub clusters: Vec<LabeledCluster>,
    pub medoids: MedoidIndex,
    pub predictions: Vec<TestPrediction>,
    /// Wall-clock seconds per stage. Kept out of the report so that reruns
    /// produce identical reports.
    pub timings: Vec<(&'static str, f64)>,
}

/// Nearest-medoid prediction with the constant rule applied first. An empty
/// index classifies every non-constant series as outlier.
pub fn predict(
    s: &NormalizedSeries,
    medoids: &MedoidIndex,
    knn_threshold: f64,
) -> (CurveLabel, Option<usize>, Option<f64>) {
    if detect_constant(s) {
        return (CurveLabel::Constant, None, None);
    }
    match classify_knn(s, medoids, knn_threshold) {
        Ok(p) => (p.label, Some(p.cluster_id), Some(p.distance)),
        Err(KnnError::EmptyIndex) => (CurveLabel::Outlier, None, None),
    }
}

fn dataset_tag(xs: &[RawSeries]) -> String {
    let mut tags: Vec<&str> = xs.iter().map(|s| s.id.dataset_tag.as_str()).collect();
    tags.sort_unstable();
    tags.dedup();
    tags.join("+")
}

pub fn run_experiment(
    xs: &[RawSeries],
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput, ValidationError> {
    cfg.validate()?;
    if xs.is_empty() {
        return Err(ValidationError::EmptyDataset);
    }
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str| {
        timings.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };
    let series = xs
        .iter()
        .map(|r| preprocess(r, cfg.sim_length))
        .collect::<Result<Vec<_>, _>>()?;
    let fit_cfg = cfg.fit_config();
    let fits: Vec<FitResult> = series
        .par_iter()
        .map(|s| classify_by_fit(s, &fit_cfg))
        .collect();
    lap("curve_fit");

    let (train, test) = split(series.len(), cfg.split_ratio, cfg.rng_seed);
    let clustered: Vec<usize> = train
        .iter()
        .copied()
        .filter(|&i| fits[i].label != CurveLabel::Constant)
        .collect();
    let train_series: Vec<NormalizedSeries> =
        clustered.iter().map(|&i| series[i].clone()).collect();
    let train_labels: Vec<CurveLabel> = clustered.iter().map(|&i| fits[i].label).collect();

    let distances = if train_series.is_empty() {
        None
    } else {
        Some(distance_matrix(&train_series)?)
    };
    lap("distance_matrix");
    let (dendrogram, flat, clusters) = match &distances {
        Some(d) => {
            let tree = linkage(d);
            let flat = flatten(&tree, cfg.cluster_threshold);
            let clusters = label_clusters(&flat, &train_labels, cfg.purity_threshold, d)?;
            (tree, flat, clusters)
        }
        None => (
            Dendrogram {
                n_leaves: 0,
                merges: Vec::new(),
            },
            FlatClustering {
                threshold: cfg.cluster_threshold,
                assignments: Vec::new(),
                clusters: Vec::new(),
            },
            Vec::new(),
        ),
    };
    let medoids = MedoidIndex::from_clusters(&clusters, &train_series);
    lap("clustering");

    let matched: usize = clusters
        .iter()
        .map(|c| c.members.iter().filter(|&&i| train_labels[i] == c.label).count())
        .sum();
    let training_agreement =
        (!clustered.is_empty()).then(|| 100.0 * matched as f64 / clustered.len() as f64);

    let predictions: Vec<TestPrediction> = test
        .par_iter()
        .map(|&i| {
            let (predicted, cluster_id, distance) = predict(&series[i], &medoids, cfg.knn_threshold);
            TestPrediction {
                series: series[i].origin.clone(),
                fit_label: fits[i].label,
                predicted,
                cluster_id,
                distance,
            }
        })
        .collect();
    lap("nearest_medoid");
    let mut confusion = ConfusionMatrix::default();
    for p in &predictions {
        confusion.record(p.fit_label, p.predicted);
    }
    let test_agreement = agreement(&confusion).ok();

    let summaries: Vec<ClusterSummary> = clusters
        .iter()
        .map(|c| ClusterSummary {
            id: c.id,
            size: c.members.len(),
            medoid: train_series[c.medoid].origin.clone(),
            medoid_label: c.medoid_label,
            label: c.label,
            purity: c.purity,
            demoted: c.demoted(),
        })
        .collect();
    let report = ValidationReport {
        dataset_tag: dataset_tag(xs),
        config: cfg.clone(),
        n_series: series.len(),
        train_size: train.len(),
        clustered_size: clustered.len(),
        test_size: test.len(),
        cluster_count: clusters.len(),
        demoted_clusters: clusters.iter().filter(|c| c.demoted()).map(|c| c.id).collect(),
        clusters: summaries,
        training_agreement,
        test_agreement,
        confusion,
    };
    Ok(ExperimentOutput {
        report,
        series,
        fits,
        clustered,
        test,
        distances,
        dendrogram,
        flat,
        clusters,
        medoids,
        predictions,
        timings,
    })
}
