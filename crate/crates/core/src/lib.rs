pub mod cli;
pub mod clustering;
pub mod curve_fit;
pub mod dtw;
pub mod knn;
pub mod label;
pub mod series;
pub mod synth;
pub mod validation;

pub use label::CurveLabel;
