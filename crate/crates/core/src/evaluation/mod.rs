//! Overall and windowed (regional) model accuracy, and per-window
//! improvement of each model over a baseline.

mod export;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{FitResult, Observation};
use crate::geometry::SiteFeatures;
use crate::models::{predict, ModelOptions, ModelParams};
use crate::num::Scalar;

pub use export::{
    export_plot_data, read_comparison_csv, read_regional_csv, read_scatter_csv, scatter_points,
    write_comparison_csv, write_regional_csv, write_scatter_csv, PlotData, ScatterPoint,
    REGIONAL_HEADER, SCATTER_HEADER,
};

/// Regional window width used when none is configured.
pub const DEFAULT_WINDOW_WIDTH: f64 = 10.0;
/// Windows with fewer samples are flagged low-confidence.
pub const MIN_CONFIDENT_SAMPLES: usize = 3;

/// Blockage feature used to order receivers for regional statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureAxis {
    #[serde(rename = "d_w")]
    WoodlandDepth,
    #[serde(rename = "d_f")]
    FoliageDepth,
    #[serde(rename = "a_f")]
    FoliageArea,
}

impl FeatureAxis {
    pub fn name(self) -> &'static str {
        match self {
            FeatureAxis::WoodlandDepth => "d_w",
            FeatureAxis::FoliageDepth => "d_f",
            FeatureAxis::FoliageArea => "a_f",
        }
    }

    pub fn value<T: Scalar>(self, f: &SiteFeatures<T>) -> T {
        match self {
            FeatureAxis::WoodlandDepth => f.woodland_depth,
            FeatureAxis::FoliageDepth => f.foliage_depth,
            FeatureAxis::FoliageArea => f.foliage_area,
        }
    }
}

impl fmt::Display for FeatureAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "d_w" | "dw" => Ok(FeatureAxis::WoodlandDepth),
            "d_f" | "df" => Ok(FeatureAxis::FoliageDepth),
            "a_f" | "af" => Ok(FeatureAxis::FoliageArea),
            other => Err(Error::InvalidArgument(format!("unknown feature axis `{other}`"))),
        }
    }
}

/// How the axis is cut into windows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Windowing<T> {
    /// Consecutive non-overlapping windows `[k w, (k+1) w)` starting at 0.
    #[default]
    Tumbling,
    /// Windows of the same width whose starts advance by `step`.
    Sliding { step: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionalWindow<T> {
    pub window_start: T,
    pub window_end: T,
    pub sample_count: usize,
    /// `None` for an empty window.
    pub rmse_db: Option<T>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub model_name: String,
    pub overall_rmse_db: T,
    /// Mean of predicted minus measured.
    pub mean_error_db: T,
    pub sample_count: usize,
    pub regional: Vec<RegionalWindow<T>>,
}

/// Signed prediction errors (predicted - measured) in dataset order.
pub fn residuals<T: Scalar>(
    dataset: &[Observation<T>],
    params: &ModelParams<T>,
    f_ghz: T,
    options: &ModelOptions,
) -> Result<Vec<T>> {
    dataset
        .iter()
        .map(|o| Ok(predict(&o.features, params, f_ghz, options)?.total_db - o.measured_db))
        .collect()
}

fn sum_squares<T: Scalar>(r: impl Iterator<Item = T>) -> T {
    r.fold(T::zero(), |acc, v| acc + v * v)
}

pub fn evaluate_overall<T: Scalar>(
    dataset: &[Observation<T>],
    params: &ModelParams<T>,
    f_ghz: T,
    options: &ModelOptions,
) -> Result<EvalReport<T>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty dataset".into()));
    }
    let res = residuals(dataset, params, f_ghz, options)?;
    let n = T::from_count(res.len());
    Ok(EvalReport {
        model_name: params.kind().name().to_owned(),
        overall_rmse_db: (sum_squares(res.iter().copied()) / n).sqrt(),
        mean_error_db: res.iter().fold(T::zero(), |a, &v| a + v) / n,
        sample_count: res.len(),
        regional: Vec::new(),
    })
}

/// Window `(start, end)` pairs covering `[0, max_value]`.
fn window_bounds<T: Scalar>(max_value: T, width: T, windowing: Windowing<T>) -> Result<Vec<(T, T)>> {
    let (step, count) = match windowing {
        Windowing::Tumbling => (width, tumbling_index(max_value, width) + 1),
        Windowing::Sliding { step } => {
            if !(step.is_finite() && step > T::zero()) {
                return Err(Error::InvalidArgument(format!("window step must be positive, got {step}")));
            }
            (step, tumbling_index(max_value, step) + 1)
        }
    };
    Ok((0..count)
        .map(|k| {
            let start = T::from_count(k) * step;
            (start, start + width)
        })
        .collect())
}

fn tumbling_index<T: Scalar>(v: T, width: T) -> usize {
    (v / width).floor().to_usize().unwrap_or(0)
}

/// Overall statistics plus per-window RMSE along `axis`.
pub fn evaluate_regional<T: Scalar>(
    dataset: &[Observation<T>],
    params: &ModelParams<T>,
    f_ghz: T,
    options: &ModelOptions,
    axis: FeatureAxis,
    window_width: T,
    windowing: Windowing<T>,
) -> Result<EvalReport<T>> {
    if !(window_width.is_finite() && window_width > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "window width must be positive, got {window_width}"
        )));
    }
    let mut report = evaluate_overall(dataset, params, f_ghz, options)?;
    let res = residuals(dataset, params, f_ghz, options)?;
    let points: Vec<(T, T)> = dataset
        .iter()
        .zip(res)
        .enumerate()
        .filter_map(|(i, (o, r))| {
            let v = axis.value(&o.features);
            if v.is_finite() && v >= T::zero() {
                Some((v, r))
            } else {
                log::warn!("record {i}: {axis} = {v} cannot be placed in a window");
                None
            }
        })
        .collect();
    let max_value = points.iter().map(|p| p.0).fold(T::zero(), T::max);
    report.regional = window_bounds(max_value, window_width, windowing)?
        .into_iter()
        .enumerate()
        .map(|(k, (start, end))| {
            let inside: Vec<T> = match windowing {
                // index-based assignment keeps the partition exact
                Windowing::Tumbling => points
                    .iter()
                    .filter(|(v, _)| tumbling_index(*v, window_width) == k)
                    .map(|p| p.1)
                    .collect(),
                Windowing::Sliding { .. } => points
                    .iter()
                    .filter(|(v, _)| *v >= start && *v < end)
                    .map(|p| p.1)
                    .collect(),
            };
            let n = inside.len();
            RegionalWindow {
                window_start: start,
                window_end: end,
                sample_count: n,
                rmse_db: (n > 0).then(|| (sum_squares(inside.into_iter()) / T::from_count(n)).sqrt()),
                low_confidence: n < MIN_CONFIDENT_SAMPLES,
            }
        })
        .collect();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelWindow<T> {
    pub rmse_db: Option<T>,
    /// Baseline RMSE minus model RMSE; positive means the model is better.
    pub improvement_db: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow<T> {
    pub window_start: T,
    pub window_end: T,
    pub baseline_rmse_db: Option<T>,
    /// One entry per compared model, ordered as `RegionalComparison::model_names`.
    pub models: Vec<ModelWindow<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalComparison<T> {
    pub axis: FeatureAxis,
    pub window_width: T,
    pub baseline_model: String,
    pub model_names: Vec<String>,
    pub rows: Vec<ComparisonRow<T>>,
}

/// Per-window improvement of every fitted model over `baseline`.
///
/// The first fit whose model name equals `baseline` is the baseline; every
/// other fit becomes a compared model.
pub fn compare_models<T: Scalar>(
    dataset: &[Observation<T>],
    fits: &[FitResult<T>],
    f_ghz: T,
    options: &ModelOptions,
    axis: FeatureAxis,
    window_width: T,
    baseline: &str,
) -> Result<RegionalComparison<T>> {
    let wanted: crate::models::ModelKind = baseline.parse()?;
    let base_idx = fits
        .iter()
        .position(|f| f.params.kind() == wanted)
        .ok_or_else(|| Error::InvalidArgument(format!("baseline model `{baseline}` was not fitted")))?;
    let regional = |p: &ModelParams<T>| {
        evaluate_regional(dataset, p, f_ghz, options, axis, window_width, Windowing::Tumbling)
    };
    let base = regional(&fits[base_idx].params)?;
    let others: Vec<(String, EvalReport<T>)> = fits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != base_idx)
        .map(|(_, f)| Ok((f.params.kind().name().to_owned(), regional(&f.params)?)))
        .collect::<Result<_>>()?;

    let rows = base
        .regional
        .iter()
        .enumerate()
        .map(|(w, bw)| ComparisonRow {
            window_start: bw.window_start,
            window_end: bw.window_end,
            baseline_rmse_db: bw.rmse_db,
            models: others
                .iter()
                .map(|(_, rep)| {
                    let rmse_db = rep.regional[w].rmse_db;
                    ModelWindow {
                        rmse_db,
                        improvement_db: bw.rmse_db.zip(rmse_db).map(|(b, m)| b - m),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(RegionalComparison {
        axis,
        window_width,
        baseline_model: base.model_name,
        model_names: others.into_iter().map(|(n, _)| n).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn obs(df: f64, measured: f64) -> Observation<f64> {
        Observation {
            features: SiteFeatures {
                distance_3d: 50.0,
                woodland_depth: 35.0,
                foliage_depth: df,
                foliage_area: 0.0,
                trunk_count: 0,
            },
            measured_db: measured,
        }
    }

    fn fspl50() -> f64 {
        crate::models::fspl(50.0, 28.0).unwrap()
    }

    #[test]
    fn overall_examples() {
        let o = ModelOptions::default();
        let exact = vec![obs(1.0, fspl50()), obs(2.0, fspl50())];
        let r = evaluate_overall(&exact, &ModelParams::Fspl {}, 28.0, &o).unwrap();
        assert_eq!(r.overall_rmse_db, 0.0);

        let shifted = vec![obs(1.0, fspl50() + 3.0), obs(2.0, fspl50() + 3.0)];
        let r = evaluate_overall(&shifted, &ModelParams::Fspl {}, 28.0, &o).unwrap();
        assert!((r.overall_rmse_db - 3.0).abs() < 1e-9);
        assert!((r.mean_error_db + 3.0).abs() < 1e-9);

        let two = vec![obs(1.0, fspl50() + 3.0), obs(2.0, fspl50() - 4.0)];
        let r = evaluate_overall(&two, &ModelParams::Fspl {}, 28.0, &o).unwrap();
        assert!((r.overall_rmse_db - 3.5355).abs() < 1e-4);
        assert!(evaluate_overall::<f64>(&[], &ModelParams::Fspl {}, 28.0, &o).is_err());
    }

    #[test]
    fn regional_windows() {
        let o = ModelOptions::default();
        let p = ModelParams::Fspl {};
        let data = vec![obs(1.0, fspl50() + 1.0), obs(4.0, fspl50() - 2.0)];
        let r = evaluate_regional(&data, &p, 28.0, &o, FeatureAxis::FoliageDepth, 10.0, Windowing::Tumbling).unwrap();
        assert_eq!(r.regional.len(), 1);
        assert_eq!(r.regional[0].rmse_db, Some(r.overall_rmse_db));

        let data = vec![obs(5.0, fspl50()), obs(15.0, fspl50())];
        let r = evaluate_regional(&data, &p, 28.0, &o, FeatureAxis::FoliageDepth, 10.0, Windowing::Tumbling).unwrap();
        let counts: Vec<_> = r.regional.iter().map(|w| w.sample_count).collect();
        assert_eq!(counts, [1, 1]);
        assert!(r.regional.iter().all(|w| w.low_confidence));

        let data = vec![obs(10.0, fspl50()), obs(35.0, fspl50())];
        let r = evaluate_regional(&data, &p, 28.0, &o, FeatureAxis::FoliageDepth, 10.0, Windowing::Tumbling).unwrap();
        let counts: Vec<_> = r.regional.iter().map(|w| w.sample_count).collect();
        assert_eq!(counts, [0, 1, 0, 1]);
        assert_eq!(r.regional[0].rmse_db, None);
        assert_eq!((r.regional[1].window_start, r.regional[1].window_end), (10.0, 20.0));

        assert!(evaluate_regional(&data, &p, 28.0, &o, FeatureAxis::FoliageDepth, 0.0, Windowing::Tumbling).is_err());
    }

    #[test]
    fn sliding_windows_overlap() {
        let o = ModelOptions::default();
        let data = vec![obs(5.0, fspl50()), obs(12.0, fspl50())];
        let r = evaluate_regional(
            &data,
            &ModelParams::Fspl {},
            28.0,
            &o,
            FeatureAxis::FoliageDepth,
            10.0,
            Windowing::Sliding { step: 1.0 },
        )
        .unwrap();
        assert_eq!(r.regional.len(), 13);
        assert_eq!(r.regional[3].sample_count, 2); // [3, 13)
    }

    #[test]
    fn comparison_against_itself_and_unknown_baseline() {
        let o = ModelOptions::default();
        let data: Vec<_> = (0..30).map(|i| obs(i as f64, fspl50() + (i % 5) as f64)).collect();
        let fit = |p: ModelParams<f64>| FitResult {
            params: p,
            rmse_db: 0.0,
            objective_evaluations: 0,
            converged: true,
        };
        let itu = fit(ModelParams::reference(ModelKind::Itu));
        let fits = vec![itu.clone(), itu];
        let c = compare_models(&data, &fits, 28.0, &o, FeatureAxis::WoodlandDepth, 10.0, "ITU").unwrap();
        assert_eq!(c.model_names, ["ITU"]);
        for row in &c.rows {
            if row.baseline_rmse_db.is_some() {
                assert_eq!(row.models[0].improvement_db, Some(0.0));
            }
        }
        assert!(compare_models(&data, &fits, 28.0, &o, FeatureAxis::WoodlandDepth, 10.0, "WMED").is_err());
    }

    #[test]
    fn axis_names() {
        for a in [FeatureAxis::WoodlandDepth, FeatureAxis::FoliageDepth, FeatureAxis::FoliageArea] {
            assert_eq!(a.name().parse::<FeatureAxis>().unwrap(), a);
        }
        assert!("x".parse::<FeatureAxis>().is_err());
    }
}
