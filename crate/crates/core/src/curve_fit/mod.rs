//! Top-down classification: simple rules for constant and dying series,
//! multi-start least-squares fits for the four parametric families, and a
//! residual cutoff for everything that fits nothing well.

mod family;
pub mod lm;

pub use family::{
    time_grid, CurveFamily, FamilyKind, GridSpacing, ParamRole, ParamSpec, Start,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::CurveLabel;
use crate::series::NormalizedSeries;
use lm::LmOptions;

/// Default closeness to zero for the dying rule, as a fraction of the maximum.
pub const DEFAULT_DYING_EPSILON: f64 = 0.04;
/// Default residual-sum-of-squares cutoff above which a series is an outlier.
pub const DEFAULT_FIT_ERROR_THRESHOLD: f64 = 5.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no start of the {0} family produced finite parameters")]
    NoConvergence(FamilyKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub label: CurveLabel,
    pub family: Option<FamilyKind>,
    pub params: Option<Vec<f64>>,
    /// Residual sum of squares of the fitted family; absent when a rule
    /// decided the label or no family converged.
    pub rss: Option<f64>,
}

impl FitResult {
    fn by_rule(label: CurveLabel) -> Self {
        Self {
            label,
            family: None,
            params: None,
            rss: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub fit_error_threshold: f64,
    pub dying_epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            fit_error_threshold: DEFAULT_FIT_ERROR_THRESHOLD,
            dying_epsilon: DEFAULT_DYING_EPSILON,
        }
    }
}

/// True iff every value equals the first and that value is nonzero.
pub fn detect_constant(s: &NormalizedSeries) -> bool {
    let v = s.values();
    match v.first() {
        Some(&first) => first > 0.0 && v.iter().all(|&x| x == first),
        None => false,
    }
}

/// First index from which the series never again exceeds `epsilon`.
pub fn dying_onset(s: &NormalizedSeries, epsilon: f64) -> Option<usize> {
    let v = s.values();
    let mut onset = None;
    for (t, &x) in v.iter().enumerate().rev() {
        if x > epsilon {
            break;
        }
        onset = Some(t);
    }
    onset
}

/// True iff the series falls to within `epsilon` of zero and stays there
/// until the end, and is not constant.
pub fn detect_dying(s: &NormalizedSeries, epsilon: f64) -> bool {
    !detect_constant(s) && dying_onset(s, epsilon).is_some()
}

/// Iteration budget every start gets before the per-cell polish.
const SCREEN_ITERATIONS: usize = 10;

/// Best fit of one family: a damped least-squares refinement from every
/// prototypical start in every subdivision cell, keeping the lowest RSS.
///
/// Every start is refined for a short budget; the best refinement of each
/// cell is then run to convergence.
pub fn fit_family(s: &NormalizedSeries, family: &CurveFamily) -> Result<FitResult, FitError> {
    let ys = s.values();
    let xs = time_grid(ys.len());
    let screen = LmOptions {
        max_iter: SCREEN_ITERATIONS,
        ..LmOptions::default()
    };
    let polish = LmOptions::default();

    let mut cell_best: Vec<Option<(f64, Vec<f64>)>> = vec![None; family.n_cells()];
    for start in family.prototypical_starts() {
        let mut p = start.params;
        family.seed_linear(&mut p, &xs, ys);
        let Some(out) = lm::minimize(family, &xs, ys, &p, &screen) else {
            continue;
        };
        if !out.rss.is_finite() || out.params.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let slot = &mut cell_best[start.cell];
        if slot.as_ref().is_none_or(|(r, _)| out.rss < *r) {
            *slot = Some((out.rss, out.params));
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for (screened_rss, params) in cell_best.into_iter().flatten() {
        let (rss, params) = match lm::minimize(family, &xs, ys, &params, &polish) {
            Some(out) if out.rss.is_finite() && out.rss <= screened_rss => (out.rss, out.params),
            _ => (screened_rss, params),
        };
        if best.as_ref().is_none_or(|(r, _)| rss < *r) {
            best = Some((rss, params));
        }
    }
    let (_, params) = best.ok_or(FitError::NoConvergence(family.kind))?;
    let rss = lm::rss(family, &xs, ys, &params);
    Ok(FitResult {
        label: family.kind.label(),
        family: Some(family.kind),
        params: Some(params),
        rss: Some(rss),
    })
}

/// Fits every family and returns the one with the lowest RSS. Ties keep the
/// earlier family in [`FamilyKind::ALL`] order.
pub fn best_family_fit(s: &NormalizedSeries) -> Option<FitResult> {
    let mut best: Option<FitResult> = None;
    for family in CurveFamily::all() {
        let Ok(fit) = fit_family(s, &family) else {
            continue;
        };
        let better = match (&best, fit.rss) {
            (None, _) => true,
            (Some(b), Some(r)) => r < b.rss.unwrap_or(f64::INFINITY),
            (Some(_), None) => false,
        };
        if better {
            best = Some(fit);
        }
    }
    best
}

/// Rule-first classification: constant, then dying, then the best-fitting
/// family, demoted to outlier when its RSS exceeds the threshold.
pub fn classify_by_fit(s: &NormalizedSeries, cfg: &FitConfig) -> FitResult {
    if detect_constant(s) {
        return FitResult::by_rule(CurveLabel::Constant);
    }
    if detect_dying(s, cfg.dying_epsilon) {
        return FitResult::by_rule(CurveLabel::Dying);
    }
    match best_family_fit(s) {
        Some(mut fit) => {
            if fit.rss.is_none_or(|r| r > cfg.fit_error_threshold) {
                fit.label = CurveLabel::Outlier;
            }
            fit
        }
        None => FitResult::by_rule(CurveLabel::Outlier),
    }
}
