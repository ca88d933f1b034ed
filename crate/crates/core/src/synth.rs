//! Labeled synthetic population series.
//!
//! Each generated series starts from a clean curve on normalized time,
//! gets seeded Gaussian noise, is clamped at zero and finally rescaled to a
//! random population ceiling, so it looks like a raw simulation export.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve_fit::lm::Model;
use crate::curve_fit::{time_grid, CurveFamily, FamilyKind};
use crate::label::CurveLabel;
use crate::series::{RawSeries, SeriesId};

/// Noise at or above this level swamps the curve shapes.
pub const MAX_NOISE_SIGMA: f64 = 0.2;
/// Population ceiling range of generated series.
pub const CEILING_RANGE: (f64, f64) = (10.0, 25_000.0);
/// Clean level at which a dying population is considered extinct.
const EXTINCTION_LEVEL: f64 = 0.02;
/// Lower clamp of the outlier random walk, above the dying cutoff.
const OUTLIER_FLOOR: f64 = 0.1;

/// Class mix of the combined user corpus, in [`TABLE1_ORDER`] order.
pub const TABLE1_PERCENT: [f64; 7] = [2.99, 7.72, 43.33, 7.10, 16.68, 17.40, 4.84];
pub const TABLE1_ORDER: [CurveLabel; 7] = [
    CurveLabel::ExponentialGrowth,
    CurveLabel::CappedGrowth,
    CurveLabel::Dying,
    CurveLabel::Oscillation,
    CurveLabel::Constant,
    CurveLabel::Gaussian,
    CurveLabel::Outlier,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub label: CurveLabel,
    /// Explicit parameters, or `None` to draw them from [`sample_region`].
    pub params: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub length: usize,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(label: CurveLabel, noise_sigma: f64, length: usize, seed: u64) -> Self {
        Self {
            label,
            params: None,
            noise_sigma,
            length,
            seed,
        }
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Self {
        self.params = Some(params);
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..MAX_NOISE_SIGMA).contains(&self.noise_sigma) {
            return Err(SynthError::InvalidSpec(format!(
                "noise_sigma {} outside [0, {MAX_NOISE_SIGMA})",
                self.noise_sigma
            )));
        }
        if self.length < 2 {
            return Err(SynthError::InvalidSpec("length must be at least 2".into()));
        }
        if let Some(p) = &self.params {
            let region = sample_region(self.label);
            if p.len() != region.len() {
                return Err(SynthError::InvalidSpec(format!(
                    "{} takes {} parameters, got {}",
                    self.label,
                    region.len(),
                    p.len()
                )));
            }
            if let Some(kind) = FamilyKind::from_label(self.label) {
                let fam = CurveFamily::new(kind);
                if !fam.in_bounds(p) {
                    return Err(SynthError::InvalidSpec(format!(
                        "{} parameters {p:?} outside family bounds",
                        self.label
                    )));
                }
            } else if p.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(SynthError::InvalidSpec(format!(
                    "{} parameters must be positive",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Parameter ranges random draws are taken from, per label.
///
/// For the fitted families these are sub-ranges of the family bounds that
/// keep each shape recognizable inside the window: gaussian baselines and
/// oscillation troughs stay well above the dying cutoff, and growth curves
/// reach their characteristic shape before the window ends. Exponential
/// growth starts from an established population (10 to 40% of the final
/// size) while capped growth starts near zero; time warping hides most other
/// differences between two rising curves.
///
/// Rule-based labels take one or two parameters: dying `[decay rate]`,
/// constant `[level]`, outlier `[start level, step sd]`.
pub fn sample_region(label: CurveLabel) -> Vec<(f64, f64)> {
    match label {
        // [c, a, b]
        CurveLabel::ExponentialGrowth => vec![(0.3, 0.6), (0.1, 0.3), (2.5, 3.5)],
        // [L, k, u0]
        CurveLabel::CappedGrowth => vec![(0.5, 1.0), (12.0, 25.0), (0.3, 0.6)],
        // [a, mu, sigma, c]
        CurveLabel::Gaussian => vec![(0.5, 1.0), (0.3, 0.7), (0.05, 0.15), (0.15, 0.4)],
        // [c, a, omega, phi]
        CurveLabel::Oscillation => vec![(0.5, 0.6), (0.2, 0.35), (2.0, 10.0), (0.5, 5.5)],
        CurveLabel::Dying => vec![(7.0, 20.0)],
        CurveLabel::Constant => vec![(0.2, 1.0)],
        CurveLabel::Outlier => vec![(OUTLIER_FLOOR, 1.0), (0.1, 0.2)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub raw: RawSeries,
    pub label: CurveLabel,
    pub params: Vec<f64>,
    pub ceiling: f64,
}

/// Generates one labeled series. Constant series are always exactly flat:
/// noise is not applied to them.
pub fn generate(spec: &GenSpec, id: SeriesId) -> Result<Generated, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let params = match &spec.params {
        Some(p) => p.clone(),
        None => sample_region(spec.label)
            .into_iter()
            .map(|(lo, hi)| rng.random_range(lo..=hi))
            .collect(),
    };
    let ceiling = rng.random_range(CEILING_RANGE.0..=CEILING_RANGE.1);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let mut add_noise = |v: f64| {
        if spec.noise_sigma > 0.0 {
            v + noise.sample(&mut rng)
        } else {
            v
        }
    };
    let grid = time_grid(spec.length);

    let mut values: Vec<f64> = match spec.label {
        CurveLabel::Constant => vec![params[0]; spec.length],
        CurveLabel::Dying => {
            let rate = params[0];
            let mut extinct = false;
            grid.iter()
                .map(|&u| {
                    let clean = (-rate * u).exp();
                    extinct |= clean <= EXTINCTION_LEVEL;
                    if extinct {
                        0.0
                    } else {
                        add_noise(clean)
                    }
                })
                .collect()
        }
        CurveLabel::Outlier => {
            let step = Normal::new(0.0, params[1])
                .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
            let mut level = params[0];
            let mut walk = Vec::with_capacity(spec.length);
            for _ in 0..spec.length {
                walk.push(level);
                level = (level + step.sample(&mut rng)).clamp(OUTLIER_FLOOR, 1.0);
            }
            walk
        }
        fitted => {
            let fam = CurveFamily::new(FamilyKind::from_label(fitted).expect("fitted label"));
            grid.iter().map(|&u| add_noise(fam.eval(u, &params))).collect()
        }
    };
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v *= ceiling / max);
    }
    let raw = RawSeries::new(id, values).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    Ok(Generated {
        raw,
        label: spec.label,
        params,
        ceiling,
    })
}

/// How many series of each label a corpus holds.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassMix {
    /// The same number of series for every label.
    PerClass(usize),
    /// `total` series split by the combined-user-corpus percentages.
    Table1 { total: usize },
}

impl ClassMix {
    /// Counts per label in [`CurveLabel::ALL`] order.
    pub fn counts(&self) -> [usize; 7] {
        match *self {
            ClassMix::PerClass(n) => [n; 7],
            ClassMix::Table1 { total } => {
                let sum: f64 = TABLE1_PERCENT.iter().sum();
                let exact: Vec<f64> = TABLE1_PERCENT
                    .iter()
                    .map(|p| total as f64 * p / sum)
                    .collect();
                let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
                let mut order: Vec<usize> = (0..7).collect();
                order.sort_by(|&a, &b| {
                    let ra = exact[a] - exact[a].floor();
                    let rb = exact[b] - exact[b].floor();
                    rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
                });
                let assigned: usize = counts.iter().sum();
                for &i in order.iter().take(total - assigned) {
                    counts[i] += 1;
                }
                let mut out = [0; 7];
                for (label, count) in TABLE1_ORDER.iter().zip(counts) {
                    out[label.index()] = count;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub mix: ClassMix,
    pub noise_sigma: f64,
    pub length: usize,
    pub seed: u64,
    pub species_per_file: usize,
    pub dataset_tag: String,
}

/// One generated model file: several species sharing a time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFile {
    pub model_id: String,
    pub series: Vec<Generated>,
}

/// Generates a whole corpus. Series are shuffled across files so each file
/// mixes labels, and the result depends only on the spec.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusFile>, SynthError> {
    if spec.species_per_file == 0 {
        return Err(SynthError::InvalidSpec(
            "species_per_file must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labels: Vec<CurveLabel> = Vec::new();
    for (label, count) in CurveLabel::ALL.iter().zip(spec.mix.counts()) {
        labels.extend(std::iter::repeat_n(*label, count));
    }
    // Fisher-Yates with the corpus rng
    for i in (1..labels.len()).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    let width = labels.len().div_ceil(spec.species_per_file).max(1).to_string().len();
    let mut files = Vec::new();
    for (file_idx, chunk) in labels.chunks(spec.species_per_file).enumerate() {
        let model_id = format!("model_{file_idx:0width$}");
        let mut series = Vec::with_capacity(chunk.len());
        for (k, &label) in chunk.iter().enumerate() {
            let gen = GenSpec::new(label, spec.noise_sigma, spec.length, rng.random());
            let id = SeriesId::new(&spec.dataset_tag, &model_id, format!("species_{k}"));
            series.push(generate(&gen, id)?);
        }
        files.push(CorpusFile { model_id, series });
    }
    Ok(files)
}

/// Phase of an oscillation folded into `[0, 2π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    phi.rem_euclid(TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_fit::{classify_by_fit, detect_constant, detect_dying, FitConfig};
    use crate::series::preprocess;

    fn id() -> SeriesId {
        SeriesId::new("t", "m", "s")
    }

    #[test]
    fn constant_is_exactly_flat() {
        for seed in 0..10 {
            let g = generate(&GenSpec::new(CurveLabel::Constant, 0.0, 400, seed), id()).unwrap();
            assert!(detect_constant(&preprocess(&g.raw, 400).unwrap()));
        }
    }

    #[test]
    fn dying_satisfies_rule() {
        for seed in 0..20 {
            let g = generate(&GenSpec::new(CurveLabel::Dying, 0.02, 400, seed), id()).unwrap();
            let s = preprocess(&g.raw, 400).unwrap();
            assert!(detect_dying(&s, 0.04));
            let onset = crate::curve_fit::dying_onset(&s, 0.04).unwrap();
            // extinction is reached by u = ln(50) / rate at the slowest rate
            let bound = ((50f64).ln() / 7.0 * 399.0).ceil() as usize + 1;
            assert!(onset <= bound, "onset {onset}");
        }
    }

    #[test]
    fn noiseless_gaussian_round_trips() {
        let g = generate(&GenSpec::new(CurveLabel::Gaussian, 0.0, 400, 5), id()).unwrap();
        let fit = classify_by_fit(&preprocess(&g.raw, 400).unwrap(), &FitConfig::default());
        assert_eq!(fit.label, CurveLabel::Gaussian);
        assert!(fit.rss.unwrap() <= 1e-6);
    }

    #[test]
    fn deterministic_and_scaled() {
        let spec = GenSpec::new(CurveLabel::Oscillation, 0.02, 400, 9);
        let a = generate(&spec, id()).unwrap();
        let b = generate(&spec, id()).unwrap();
        assert_eq!(a, b);
        let max = a.raw.values().iter().copied().fold(0.0, f64::max);
        assert!((max - a.ceiling).abs() < 1e-9 * a.ceiling);
        assert!((CEILING_RANGE.0..=CEILING_RANGE.1).contains(&a.ceiling));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate(&GenSpec::new(CurveLabel::Gaussian, 0.2, 400, 0), id()).is_err());
        assert!(generate(&GenSpec::new(CurveLabel::Gaussian, -0.1, 400, 0), id()).is_err());
        assert!(generate(&GenSpec::new(CurveLabel::Gaussian, 0.0, 1, 0), id()).is_err());
        let bad = GenSpec::new(CurveLabel::Gaussian, 0.0, 400, 0).with_params(vec![1.0, 0.5]);
        assert!(generate(&bad, id()).is_err());
        let out = GenSpec::new(CurveLabel::CappedGrowth, 0.0, 400, 0).with_params(vec![5.0, 10.0, 0.5]);
        assert!(generate(&out, id()).is_err());
    }

    #[test]
    fn table1_mix_matches_combined_corpus() {
        let counts = ClassMix::Table1 { total: 971 }.counts();
        let expected = [
            (CurveLabel::ExponentialGrowth, 29),
            (CurveLabel::CappedGrowth, 75),
            (CurveLabel::Dying, 420),
            (CurveLabel::Oscillation, 69),
            (CurveLabel::Constant, 162),
            (CurveLabel::Gaussian, 169),
            (CurveLabel::Outlier, 47),
        ];
        for (label, n) in expected {
            assert!(counts[label.index()].abs_diff(n) <= 1, "{label}");
        }
        assert_eq!(counts.iter().sum::<usize>(), 971);
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let spec = CorpusSpec {
            mix: ClassMix::PerClass(3),
            noise_sigma: 0.02,
            length: 50,
            seed: 7,
            species_per_file: 4,
            dataset_tag: "synth".into(),
        };
        let a = generate_corpus(&spec).unwrap();
        assert_eq!(a.len(), 6);
        let all: Vec<_> = a.iter().flat_map(|f| &f.series).collect();
        assert_eq!(all.len(), 21);
        for label in CurveLabel::ALL {
            assert_eq!(all.iter().filter(|g| g.label == label).count(), 3);
        }
        assert_eq!(a, generate_corpus(&spec).unwrap());
    }
}
