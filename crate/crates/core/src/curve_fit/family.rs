//! The four parametric curve families and their search spaces.
//!
//! All families are expressed over normalized time `u = t / (n − 1)` so
//! parameter magnitudes do not depend on the series length:
//!
//! | family              | model                                | parameters            |
//! |---------------------|--------------------------------------|-----------------------|
//! | exponential growth  | `c + a·exp(b·u)`                     | `[c, a, b]`           |
//! | capped growth       | `L / (1 + exp(−k·(u − u0)))`         | `[L, k, u0]`          |
//! | gaussian            | `a·exp(−(u − μ)² / (2σ²)) + c`       | `[a, μ, σ, c]`        |
//! | oscillation         | `c + a·sin(2π·ω·u + φ)`              | `[c, a, ω, φ]`        |
//!
//! Parameters split into *amplitude* parameters, which enter the model
//! linearly and scale with the series, and *shape* parameters. The search
//! grid and its subdivision cells span the shape parameters; amplitude
//! parameters of each start are solved by linear least squares against the
//! data.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lm::{self, Model};
use crate::label::CurveLabel;

/// Identifier of a fitted family. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    ExponentialGrowth,
    CappedGrowth,
    Gaussian,
    Oscillation,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] = [
        FamilyKind::ExponentialGrowth,
        FamilyKind::CappedGrowth,
        FamilyKind::Gaussian,
        FamilyKind::Oscillation,
    ];

    pub fn label(self) -> CurveLabel {
        match self {
            FamilyKind::ExponentialGrowth => CurveLabel::ExponentialGrowth,
            FamilyKind::CappedGrowth => CurveLabel::CappedGrowth,
            FamilyKind::Gaussian => CurveLabel::Gaussian,
            FamilyKind::Oscillation => CurveLabel::Oscillation,
        }
    }

    pub fn from_label(label: CurveLabel) -> Option<Self> {
        FamilyKind::ALL.into_iter().find(|k| k.label() == label)
    }

    pub fn as_str(self) -> &'static str {
        self.label().as_str()
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Enters the model linearly; initialized from the data.
    Amplitude,
    /// Spanned by the start grid and subdivided.
    Shape,
    /// Periodic angle; initialized from the data together with the amplitudes.
    Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpacing {
    Linear,
    Geometric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub role: ParamRole,
    pub spacing: GridSpacing,
    /// Grid points per subdivision cell (shape parameters only).
    pub points_per_cell: usize,
}

impl ParamSpec {
    const fn amplitude(name: &'static str, lo: f64, hi: f64) -> Self {
        Self {
            name,
            lo,
            hi,
            role: ParamRole::Amplitude,
            spacing: GridSpacing::Linear,
            points_per_cell: 0,
        }
    }

    const fn shape(
        name: &'static str,
        lo: f64,
        hi: f64,
        spacing: GridSpacing,
        points_per_cell: usize,
    ) -> Self {
        Self {
            name,
            lo,
            hi,
            role: ParamRole::Shape,
            spacing,
            points_per_cell,
        }
    }

    /// Splits the range into two halves (in the grid's own spacing).
    fn halves(&self) -> [(f64, f64); 2] {
        let mid = match self.spacing {
            GridSpacing::Linear => 0.5 * (self.lo + self.hi),
            GridSpacing::Geometric => (self.lo * self.hi).sqrt(),
        };
        [(self.lo, mid), (mid, self.hi)]
    }

    /// Cell-centred grid points inside `[lo, hi]`.
    fn grid(&self, lo: f64, hi: f64) -> Vec<f64> {
        let m = self.points_per_cell;
        (0..m)
            .map(|i| {
                let frac = (i as f64 + 0.5) / m as f64;
                match self.spacing {
                    GridSpacing::Linear => lo + frac * (hi - lo),
                    GridSpacing::Geometric => lo * (hi / lo).powf(frac),
                }
            })
            .collect()
    }
}

/// One starting point of the multi-start search.
#[derive(Debug, Clone, PartialEq)]
pub struct Start {
    /// Index of the subdivision cell the start belongs to.
    pub cell: usize,
    pub params: Vec<f64>,
}

/// A parametric family together with its bounds and start grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFamily {
    pub kind: FamilyKind,
    pub params: Vec<ParamSpec>,
}

impl CurveFamily {
    pub fn new(kind: FamilyKind) -> Self {
        use GridSpacing::*;
        let params = match kind {
            FamilyKind::ExponentialGrowth => vec![
                ParamSpec::amplitude("c", -1.0, 1.0),
                ParamSpec::amplitude("a", 1e-12, 2.0),
                ParamSpec::shape("b", 0.05, 20.0, Geometric, 6),
            ],
            FamilyKind::CappedGrowth => vec![
                ParamSpec::amplitude("L", 1e-6, 1.2),
                ParamSpec::shape("k", 0.5, 100.0, Geometric, 4),
                ParamSpec::shape("u0", 0.0, 1.0, Linear, 5),
            ],
            FamilyKind::Gaussian => vec![
                ParamSpec::amplitude("a", 1e-6, 1.5),
                ParamSpec::shape("mu", 0.0, 1.0, Linear, 6),
                ParamSpec::shape("sigma", 0.005, 1.0, Geometric, 5),
                ParamSpec::amplitude("c", -0.5, 1.0),
            ],
            FamilyKind::Oscillation => vec![
                ParamSpec::amplitude("c", -0.5, 1.5),
                ParamSpec::amplitude("a", 1e-9, 1.5),
                ParamSpec::shape("omega", 0.5, 40.0, Linear, 50),
                ParamSpec {
                    name: "phi",
                    lo: 0.0,
                    hi: TAU,
                    role: ParamRole::Phase,
                    spacing: Linear,
                    points_per_cell: 0,
                },
            ],
        };
        Self { kind, params }
    }

    pub fn all() -> Vec<CurveFamily> {
        FamilyKind::ALL.into_iter().map(CurveFamily::new).collect()
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        self.params.iter().map(|p| p.name).collect()
    }

    fn shape_indices(&self) -> Vec<usize> {
        (0..self.params.len())
            .filter(|&i| self.params[i].role == ParamRole::Shape)
            .collect()
    }

    pub fn n_cells(&self) -> usize {
        1 << self.shape_indices().len()
    }

    /// Prototypical starting points: a grid over the shape parameters inside
    /// each of the `2^shape_dims` subdivision cells. Amplitude and phase
    /// entries hold the midpoint of their range until [`Self::seed_linear`]
    /// replaces them with data-driven values.
    pub fn prototypical_starts(&self) -> Vec<Start> {
        let shape = self.shape_indices();
        let base: Vec<f64> = self.params.iter().map(|p| 0.5 * (p.lo + p.hi)).collect();
        let mut starts = Vec::new();
        for cell in 0..self.n_cells() {
            let axes: Vec<(usize, Vec<f64>)> = shape
                .iter()
                .enumerate()
                .map(|(bit, &pi)| {
                    let spec = &self.params[pi];
                    let (lo, hi) = spec.halves()[(cell >> bit) & 1];
                    (pi, spec.grid(lo, hi))
                })
                .collect();
            let total: usize = axes.iter().map(|(_, g)| g.len()).product();
            for flat in 0..total {
                let mut params = base.clone();
                let mut rem = flat;
                for (pi, grid) in &axes {
                    params[*pi] = grid[rem % grid.len()];
                    rem /= grid.len();
                }
                starts.push(Start { cell, params });
            }
        }
        starts
    }

    pub fn in_bounds(&self, p: &[f64]) -> bool {
        p.len() == self.params.len()
            && p
                .iter()
                .zip(&self.params)
                .all(|(v, s)| v.is_finite() && *v >= s.lo && *v <= s.hi)
    }

    /// Replaces the amplitude (and phase) entries of `p` with the linear
    /// least-squares solution for the data at the given shape parameters.
    pub fn seed_linear(&self, p: &mut [f64], xs: &[f64], ys: &[f64]) {
        let solved = match self.kind {
            FamilyKind::ExponentialGrowth => {
                let e: Vec<f64> = xs.iter().map(|u| (p[2] * u).exp()).collect();
                lm::linear_lstsq(&[vec![1.0; xs.len()], e], ys).map(|c| {
                    p[0] = c[0];
                    p[1] = c[1];
                })
            }
            FamilyKind::CappedGrowth => {
                let s: Vec<f64> = xs.iter().map(|u| logistic(p[1] * (u - p[2]))).collect();
                lm::linear_lstsq(&[s], ys).map(|c| p[0] = c[0])
            }
            FamilyKind::Gaussian => {
                let g: Vec<f64> = xs.iter().map(|u| bump(*u, p[1], p[2])).collect();
                lm::linear_lstsq(&[g, vec![1.0; xs.len()]], ys).map(|c| {
                    p[0] = c[0];
                    p[3] = c[1];
                })
            }
            FamilyKind::Oscillation => {
                let w = TAU * p[2];
                let s: Vec<f64> = xs.iter().map(|u| (w * u).sin()).collect();
                let c: Vec<f64> = xs.iter().map(|u| (w * u).cos()).collect();
                lm::linear_lstsq(&[vec![1.0; xs.len()], s, c], ys).map(|coef| {
                    p[0] = coef[0];
                    p[1] = coef[1].hypot(coef[2]);
                    p[3] = coef[2].atan2(coef[1]);
                })
            }
        };
        if solved.is_none() {
            for (v, spec) in p.iter_mut().zip(&self.params) {
                if spec.role != ParamRole::Shape {
                    *v = 0.5 * (spec.lo + spec.hi);
                }
            }
        }
        self.project(p);
    }

    /// Rescales the amplitude parameters so the curve is multiplied by
    /// `factor`. Shape parameters are unchanged.
    pub fn scale_amplitude(&self, p: &[f64], factor: f64) -> Vec<f64> {
        p.iter()
            .zip(&self.params)
            .map(|(v, s)| {
                if s.role == ParamRole::Amplitude {
                    v * factor
                } else {
                    *v
                }
            })
            .collect()
    }

    /// Evaluates the curve on `n` evenly spaced steps of normalized time.
    pub fn sample(&self, p: &[f64], n: usize) -> Vec<f64> {
        time_grid(n).into_iter().map(|u| self.eval(u, p)).collect()
    }
}

impl Model for CurveFamily {
    fn n_params(&self) -> usize {
        self.params.len()
    }

    fn eval(&self, u: f64, p: &[f64]) -> f64 {
        match self.kind {
            FamilyKind::ExponentialGrowth => p[0] + p[1] * (p[2] * u).exp(),
            FamilyKind::CappedGrowth => p[0] * logistic(p[1] * (u - p[2])),
            FamilyKind::Gaussian => p[0] * bump(u, p[1], p[2]) + p[3],
            FamilyKind::Oscillation => p[0] + p[1] * (TAU * p[2] * u + p[3]).sin(),
        }
    }

    fn eval_grad(&self, u: f64, p: &[f64], g: &mut [f64]) -> f64 {
        match self.kind {
            FamilyKind::ExponentialGrowth => {
                let e = (p[2] * u).exp();
                g[0] = 1.0;
                g[1] = e;
                g[2] = p[1] * u * e;
                p[0] + p[1] * e
            }
            FamilyKind::CappedGrowth => {
                let s = logistic(p[1] * (u - p[2]));
                let ds = p[0] * s * (1.0 - s);
                g[0] = s;
                g[1] = ds * (u - p[2]);
                g[2] = -ds * p[1];
                p[0] * s
            }
            FamilyKind::Gaussian => {
                let b = bump(u, p[1], p[2]);
                let d = u - p[1];
                let s2 = p[2] * p[2];
                g[0] = b;
                g[1] = p[0] * b * d / s2;
                g[2] = p[0] * b * d * d / (s2 * p[2]);
                g[3] = 1.0;
                p[0] * b + p[3]
            }
            FamilyKind::Oscillation => {
                let arg = TAU * p[2] * u + p[3];
                let (s, c) = arg.sin_cos();
                g[0] = 1.0;
                g[1] = s;
                g[2] = p[1] * c * TAU * u;
                g[3] = p[1] * c;
                p[0] + p[1] * s
            }
        }
    }

    fn grad(&self, u: f64, p: &[f64], g: &mut [f64]) {
        self.eval_grad(u, p, g);
    }

    fn project(&self, p: &mut [f64]) {
        // a negative sine amplitude is a half-turn phase shift
        if self.kind == FamilyKind::Oscillation && p[1] < 0.0 {
            p[1] = -p[1];
            p[3] += PI;
        }
        for (v, spec) in p.iter_mut().zip(&self.params) {
            if spec.role == ParamRole::Phase {
                *v = v.rem_euclid(TAU);
            } else if v.is_nan() {
                *v = 0.5 * (spec.lo + spec.hi);
            } else {
                *v = v.clamp(spec.lo, spec.hi);
            }
        }
    }
}

/// Normalized time `u_t = t / (n − 1)` for `t = 0..n`.
pub fn time_grid(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0; n];
    }
    let denom = (n - 1) as f64;
    (0..n).map(|t| t as f64 / denom).collect()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bump(u: f64, mu: f64, sigma: f64) -> f64 {
    let d = (u - mu) / sigma;
    (-0.5 * d * d).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences against the analytic gradient.
    #[test]
    fn gradients_match_finite_differences() {
        let cases: [(FamilyKind, Vec<f64>); 4] = [
            (FamilyKind::ExponentialGrowth, vec![0.1, 0.3, 2.5]),
            (FamilyKind::CappedGrowth, vec![0.9, 12.0, 0.4]),
            (FamilyKind::Gaussian, vec![0.7, 0.45, 0.12, 0.2]),
            (FamilyKind::Oscillation, vec![0.5, 0.3, 3.2, 1.1]),
        ];
        for (kind, p) in cases {
            let fam = CurveFamily::new(kind);
            let mut g = vec![0.0; p.len()];
            for &u in &[0.0, 0.17, 0.5, 0.83, 1.0] {
                fam.grad(u, &p, &mut g);
                for i in 0..p.len() {
                    let h = 1e-6 * p[i].abs().max(1.0);
                    let mut hi = p.clone();
                    let mut lo = p.clone();
                    hi[i] += h;
                    lo[i] -= h;
                    let fd = (fam.eval(u, &hi) - fam.eval(u, &lo)) / (2.0 * h);
                    assert!(
                        (fd - g[i]).abs() <= 1e-5 * fd.abs().max(1.0),
                        "{kind} param {i} at u={u}: fd {fd} vs {}",
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn starts_lie_within_bounds_and_cover_cells() {
        for fam in CurveFamily::all() {
            let starts = fam.prototypical_starts();
            assert!(!starts.is_empty());
            for s in &starts {
                assert!(fam.in_bounds(&s.params), "{} {:?}", fam.kind, s.params);
            }
            for cell in 0..fam.n_cells() {
                assert!(starts.iter().any(|s| s.cell == cell));
            }
            for spec in &fam.params {
                assert!(spec.lo.is_finite() && spec.hi.is_finite() && spec.lo < spec.hi);
                if spec.role == ParamRole::Shape {
                    assert!(2 * spec.points_per_cell >= 3);
                }
            }
        }
    }

    #[test]
    fn cell_counts_follow_shape_dimension() {
        let cells: Vec<usize> = CurveFamily::all().iter().map(|f| f.n_cells()).collect();
        assert_eq!(cells, vec![2, 4, 4, 2]);
    }

    #[test]
    fn projection_folds_negative_amplitude_into_phase() {
        let fam = CurveFamily::new(FamilyKind::Oscillation);
        let mut p = vec![0.5, -0.3, 2.0, 0.2];
        let before: Vec<f64> = (0..10).map(|i| fam.eval(i as f64 / 9.0, &p)).collect();
        fam.project(&mut p);
        assert!(p[1] > 0.0);
        for (i, b) in before.iter().enumerate() {
            assert!((fam.eval(i as f64 / 9.0, &p) - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_amplitude_scales_curve() {
        for (kind, p) in [
            (FamilyKind::ExponentialGrowth, vec![0.1, 0.3, 2.5]),
            (FamilyKind::CappedGrowth, vec![0.9, 12.0, 0.4]),
            (FamilyKind::Gaussian, vec![0.7, 0.45, 0.12, 0.2]),
            (FamilyKind::Oscillation, vec![0.5, 0.3, 3.2, 1.1]),
        ] {
            let fam = CurveFamily::new(kind);
            let q = fam.scale_amplitude(&p, 0.5);
            for u in time_grid(7) {
                assert!((fam.eval(u, &q) - 0.5 * fam.eval(u, &p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_grid_spans_unit_interval() {
        let g = time_grid(400);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[399], 1.0);
        assert_eq!(time_grid(1), vec![0.0]);
    }
}
