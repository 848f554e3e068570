//! Site-specific foliage path-loss modeling for millimeter-wave links.
//!
//! The crate turns elevation rasters, a trunk inventory and a measurement
//! log into per-receiver blockage features, predicts basic transmission loss
//! under eight models, fits model parameters by RMSE minimization, and
//! reports overall and windowed model comparisons.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the command-line tool uses.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod geodata;
pub mod geometry;
pub mod models;
pub mod num;
pub mod point;
pub mod synth;

pub use error::{Error, Result};
pub use num::Scalar;
pub use point::Point3;

pub type Point = point::Point3<f64>;
pub type Grid = geodata::RasterGrid<f64>;
pub type Trunks = geodata::TrunkSet<f64>;
pub type Measurement = geodata::MeasurementRecord<f64>;
pub type Site = geodata::SiteGeometry<f64>;
pub type Features = geometry::SiteFeatures<f64>;
pub type Params = models::ModelParams<f64>;
pub type Observation = fitting::Observation<f64>;
pub type Fit = fitting::FitResult<f64>;
pub type Report = evaluation::EvalReport<f64>;
pub type Comparison = evaluation::RegionalComparison<f64>;
