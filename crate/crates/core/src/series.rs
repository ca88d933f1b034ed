//! Raw population traces and their fixed-length, unit-scaled form.
//!
//! Every classifier in this crate consumes [`NormalizedSeries`]. A raw trace
//! is truncated to its first `sim_length` points and divided by the maximum
//! over that window, so population counts in the tens of thousands and in
//! the tens end up on the same `[0, 1]` scale.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of time steps kept per series (months of simulation).
pub const DEFAULT_SIM_LENGTH: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("series `{id}` has {len} points, need at least {required}")]
    TooShort {
        id: String,
        len: usize,
        required: usize,
    },
    #[error("series `{id}` is empty")]
    Empty { id: String },
    #[error("series `{id}` has invalid value {value} at index {index}")]
    InvalidValue { id: String, index: usize, value: f64 },
    #[error("sim_length must be positive")]
    ZeroLength,
    #[error("malformed csv {path}: {reason}")]
    MalformedCsv { path: String, reason: String },
    #[error("empty csv file {path}")]
    EmptyFile { path: String },
    #[error("i/o error reading {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Identity of a series: which species column of which model in which dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeriesId {
    pub dataset_tag: String,
    pub model_id: String,
    pub species_name: String,
}

impl SeriesId {
    pub fn new(
        dataset_tag: impl Into<String>,
        model_id: impl Into<String>,
        species_name: impl Into<String>,
    ) -> Self {
        Self {
            dataset_tag: dataset_tag.into(),
            model_id: model_id.into(),
            species_name: species_name.into(),
        }
    }
}

impl fmt::Display for SeriesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.model_id, self.species_name)
    }
}

/// One species' population counts as exported by a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub id: SeriesId,
    values: Vec<f64>,
}

impl RawSeries {
    /// Builds a raw series, rejecting empty input and any value that is
    /// negative or not finite.
    pub fn new(id: SeriesId, values: Vec<f64>) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty { id: id.to_string() });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(SeriesError::InvalidValue {
                id: id.to_string(),
                index,
                value,
            });
        }
        Ok(Self { id, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A fixed-length trace scaled into `[0, 1]`.
///
/// The maximum value is exactly `1.0` unless the source window was all zero,
/// in which case every value is `0.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub origin: SeriesId,
    values: Vec<f64>,
}

impl NormalizedSeries {
    /// Wraps values that are already unit-scaled. Values must lie in `[0, 1]`.
    pub fn from_unit_values(origin: SeriesId, values: Vec<f64>) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty {
                id: origin.to_string(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SeriesError::InvalidValue {
                id: origin.to_string(),
                index,
                value,
            });
        }
        Ok(Self { origin, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Truncates `raw` to its first `sim_length` points and divides by the
/// maximum of that window.
pub fn preprocess(raw: &RawSeries, sim_length: usize) -> Result<NormalizedSeries, SeriesError> {
    if sim_length == 0 {
        return Err(SeriesError::ZeroLength);
    }
    if raw.len() < sim_length {
        return Err(SeriesError::TooShort {
            id: raw.id.to_string(),
            len: raw.len(),
            required: sim_length,
        });
    }
    let window = &raw.values[..sim_length];
    let max = window.iter().copied().fold(0.0, f64::max);
    let values = if max > 0.0 {
        window.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; sim_length]
    };
    Ok(NormalizedSeries {
        origin: raw.id.clone(),
        values,
    })
}

/// Re-applies max-normalization to an already normalized series.
pub fn renormalize(s: &NormalizedSeries) -> NormalizedSeries {
    let max = s.max();
    let values = if max > 0.0 {
        s.values.iter().map(|v| v / max).collect()
    } else {
        s.values.clone()
    };
    NormalizedSeries {
        origin: s.origin.clone(),
        values,
    }
}

/// Reads one simulation export: a time column followed by one column per
/// species. The header row names the species.
pub fn ingest_csv(path: &Path, dataset_tag: &str) -> Result<Vec<RawSeries>, SeriesError> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| SeriesError::Io {
        path: display.clone(),
        reason: e.to_string(),
    })?;
    let model_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());
    parse_csv(&bytes, &display, dataset_tag, &model_id)
}

/// Parses CSV bytes in the simulation export layout. `source` is only used
/// in error messages.
pub fn parse_csv(
    bytes: &[u8],
    source: &str,
    dataset_tag: &str,
    model_id: &str,
) -> Result<Vec<RawSeries>, SeriesError> {
    let malformed = |reason: String| SeriesError::MalformedCsv {
        path: source.to_string(),
        reason,
    };
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(SeriesError::EmptyFile {
            path: source.to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .clone();
    if headers.len() < 2 {
        return Err(malformed(
            "need a time column and at least one species column".into(),
        ));
    }
    let species: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); species.len()];
    for (row_idx, record) in reader.records().enumerate() {
        // header is line 1
        let line = row_idx + 2;
        let record = record.map_err(|e| malformed(format!("line {line}: {e}")))?;
        for (col_idx, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                malformed(format!(
                    "line {line}, column {} (`{}`): non-numeric cell `{cell}`",
                    col_idx + 1,
                    headers.get(col_idx).unwrap_or("?"),
                ))
            })?;
            if col_idx > 0 {
                columns[col_idx - 1].push(value);
            }
        }
    }
    if columns[0].is_empty() {
        return Err(SeriesError::EmptyFile {
            path: source.to_string(),
        });
    }
    species
        .into_iter()
        .zip(columns)
        .map(|(name, values)| RawSeries::new(SeriesId::new(dataset_tag, model_id, name), values))
        .collect()
}

/// Writes series in the same layout [`ingest_csv`] reads. All series must
/// have equal length.
pub fn write_csv<W: std::io::Write>(writer: W, series: &[RawSeries]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(series.iter().map(|s| s.id.species_name.clone()));
    w.write_record(&header)?;
    let len = series.first().map_or(0, RawSeries::len);
    for t in 0..len {
        let mut row = Vec::with_capacity(series.len() + 1);
        row.push(t.to_string());
        row.extend(series.iter().map(|s| s.values[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
