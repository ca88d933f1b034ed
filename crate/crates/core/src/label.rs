use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Classification outcome for one population series.
///
/// Variant order is the row/column order used in confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveLabel {
    Outlier,
    ExponentialGrowth,
    CappedGrowth,
    Dying,
    Oscillation,
    Gaussian,
    Constant,
}

impl CurveLabel {
    pub const ALL: [CurveLabel; 7] = [
        CurveLabel::Outlier,
        CurveLabel::ExponentialGrowth,
        CurveLabel::CappedGrowth,
        CurveLabel::Dying,
        CurveLabel::Oscillation,
        CurveLabel::Gaussian,
        CurveLabel::Constant,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CurveLabel::Outlier => "outlier",
            CurveLabel::ExponentialGrowth => "exponential_growth",
            CurveLabel::CappedGrowth => "capped_growth",
            CurveLabel::Dying => "dying",
            CurveLabel::Oscillation => "oscillation",
            CurveLabel::Gaussian => "gaussian",
            CurveLabel::Constant => "constant",
        }
    }

    /// Three-letter column heading.
    pub fn short(self) -> &'static str {
        match self {
            CurveLabel::Outlier => "Out",
            CurveLabel::ExponentialGrowth => "Exp",
            CurveLabel::CappedGrowth => "Cap",
            CurveLabel::Dying => "Die",
            CurveLabel::Oscillation => "Osc",
            CurveLabel::Gaussian => "Gau",
            CurveLabel::Constant => "Con",
        }
    }
}

impl fmt::Display for CurveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown curve label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for CurveLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CurveLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}
