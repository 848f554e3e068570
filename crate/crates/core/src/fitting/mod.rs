//! Parameter estimation by RMSE minimization against measured path loss.

mod simplex;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SiteFeatures;
use crate::models::{excess_loss, fspl, ModelKind, ModelOptions, ModelParams, WMED_BREAKPOINT_M};
use crate::num::Scalar;

/// Grid points per free dimension in the coarse search.
pub const DEFAULT_GRID_POINTS: usize = 17;
/// Refinement stops once a round improves RMSE by less than this, in dB.
pub const DEFAULT_TOLERANCE_DB: f64 = 1e-4;
/// Smallest restart step, as a fraction of the coarse-grid spacing.
const MIN_STEP_SCALE: f64 = 1e-3;

/// One fitting sample: features at a receiver and its measured loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub features: SiteFeatures<T>,
    pub measured_db: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeParameter<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> FreeParameter<T> {
    pub fn new(name: impl Into<String>, lower: T, upper: T) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub grid_points: usize,
    pub max_evaluations: usize,
    pub tolerance_db: f64,
    /// Upper limit on simplex refinement rounds.
    pub max_rounds: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            max_evaluations: 250_000,
            tolerance_db: DEFAULT_TOLERANCE_DB,
            max_rounds: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitSpec<T> {
    pub kind: ModelKind,
    pub free: Vec<FreeParameter<T>>,
    pub fixed: Vec<(String, T)>,
    pub dataset: Vec<Observation<T>>,
    pub carrier_frequency_ghz: T,
    pub options: ModelOptions,
    pub config: FitConfig,
}

/// Fitted parameters with their RMSE. Serializes as the model's parameter
/// document extended with `rmse_db`, `objective_evaluations` and `converged`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct FitResult<T> {
    #[serde(flatten)]
    pub params: ModelParams<T>,
    pub rmse_db: T,
    pub objective_evaluations: usize,
    pub converged: bool,
}

/// Root mean square of the pairwise differences.
pub fn rmse<T: Scalar>(predictions: &[T], measurements: &[T]) -> Result<T> {
    if predictions.len() != measurements.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} predictions, {} measurements",
            predictions.len(),
            measurements.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("rmse of an empty sample".into()));
    }
    let sum = predictions
        .iter()
        .zip(measurements)
        .fold(T::zero(), |acc, (&p, &m)| acc + (p - m) * (p - m));
    Ok((sum / T::from_count(predictions.len())).sqrt())
}

/// Drops observations with non-finite features or measurements, warning for each.
pub fn finite_observations<T: Scalar>(dataset: &[Observation<T>]) -> Vec<Observation<T>> {
    dataset
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            if o.features.is_finite() && o.measured_db.is_finite() {
                Some(*o)
            } else {
                log::warn!("dropping record {i}: non-finite features or measurement");
                None
            }
        })
        .collect()
}

/// Precomputed FSPL per observation plus the objective over model parameters.
struct Objective<'a, T> {
    kind: ModelKind,
    dataset: &'a [Observation<T>],
    fspl_db: Vec<T>,
    f_ghz: T,
    options: ModelOptions,
}

impl<'a, T: Scalar> Objective<'a, T> {
    fn new(kind: ModelKind, dataset: &'a [Observation<T>], f_ghz: T, options: ModelOptions) -> Result<Self> {
        let fspl_db = dataset
            .iter()
            .map(|o| fspl(o.features.distance_3d, f_ghz))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind,
            dataset,
            fspl_db,
            f_ghz,
            options,
        })
    }

    fn rmse(&self, params: &ModelParams<T>) -> Result<T> {
        let mut sum = T::zero();
        for (o, &base) in self.dataset.iter().zip(&self.fspl_db) {
            let r = base + excess_loss(&o.features, params, self.f_ghz, &self.options)? - o.measured_db;
            sum = sum + r * r;
        }
        Ok((sum / T::from_count(self.dataset.len())).sqrt())
    }

    /// RMSE for a full parameter vector; infinite where the model cannot be evaluated.
    fn at(&self, values: &[T]) -> T {
        ModelParams::from_values(self.kind, values)
            .and_then(|p| self.rmse(&p))
            .unwrap_or_else(|_| T::infinity())
    }
}

fn result_for<T: Scalar>(objective: &Objective<'_, T>, params: ModelParams<T>) -> Result<FitResult<T>> {
    Ok(FitResult {
        rmse_db: objective.rmse(&params)?,
        params,
        objective_evaluations: 1,
        converged: true,
    })
}

/// Least-squares loss per tree for the AF model, solved in closed form.
pub fn fit_af_closed_form<T: Scalar>(dataset: &[Observation<T>], f_ghz: T) -> Result<FitResult<T>> {
    let data = finite_observations(dataset);
    let objective = Objective::new(ModelKind::Af, &data, f_ghz, ModelOptions::default())?;
    let (mut num, mut den) = (T::zero(), T::zero());
    for (o, &base) in data.iter().zip(&objective.fspl_db) {
        let n = T::from_count(o.features.trunk_count);
        num = num + n * (o.measured_db - base);
        den = den + n * n;
    }
    if den <= T::zero() {
        return Err(Error::Fit("AF fit needs at least one record with a trunk in the Fresnel zone".into()));
    }
    let mut loss_per_tree_db = num / den;
    if loss_per_tree_db < T::zero() {
        log::warn!("least-squares loss per tree is negative ({loss_per_tree_db} dB); clamped to 0");
        loss_per_tree_db = T::zero();
    }
    result_for(&objective, ModelParams::Af { loss_per_tree_db })
}

/// Evaluates a model with no free parameters (FSPL, WMED, or any fully fixed set).
pub fn evaluate_fixed<T: Scalar>(
    dataset: &[Observation<T>],
    params: ModelParams<T>,
    f_ghz: T,
    options: ModelOptions,
) -> Result<FitResult<T>> {
    let data = finite_observations(dataset);
    if data.is_empty() {
        return Err(Error::Fit("no usable records".into()));
    }
    let objective = Objective::new(params.kind(), &data, f_ghz, options)?;
    result_for(&objective, params)
}

/// Maps the free-parameter vector into the model's full parameter vector.
struct Layout<T> {
    template: Vec<T>,
    slots: Vec<usize>,
}

impl<T: Scalar> Layout<T> {
    fn new(spec: &FitSpec<T>) -> Result<Self> {
        let names = spec.kind.parameter_names();
        let mut template = vec![T::nan(); names.len()];
        let mut slots = Vec::with_capacity(spec.free.len());
        let mut seen = vec![false; names.len()];
        let index_of = |name: &str| {
            names.iter().position(|n| *n == name).ok_or_else(|| {
                Error::InvalidParams(format!("{} has no parameter `{name}`", spec.kind))
            })
        };
        for p in &spec.free {
            let i = index_of(&p.name)?;
            if seen[i] {
                return Err(Error::InvalidParams(format!("`{}` listed twice", p.name)));
            }
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower < p.upper) {
                return Err(Error::InvalidParams(format!(
                    "bounds for `{}` must be finite with lower < upper, got [{}, {}]",
                    p.name, p.lower, p.upper
                )));
            }
            seen[i] = true;
            slots.push(i);
        }
        for (name, v) in &spec.fixed {
            let i = index_of(name)?;
            if seen[i] {
                return Err(Error::InvalidParams(format!("`{name}` is both free and fixed, or fixed twice")));
            }
            seen[i] = true;
            template[i] = *v;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParams(format!(
                "{}: parameter `{}` is neither free nor fixed",
                spec.kind, names[i]
            )));
        }
        Ok(Self { template, slots })
    }

    fn expand(&self, free: &[T]) -> Vec<T> {
        let mut full = self.template.clone();
        for (&slot, &v) in self.slots.iter().zip(free) {
            full[slot] = v;
        }
        full
    }
}

fn grid_value<T: Scalar>(p: &FreeParameter<T>, j: usize, points: usize) -> T {
    p.lower + (p.upper - p.lower) * T::from_count(j) / T::from_count(points - 1)
}

/// Bounded derivative-free RMSE minimization.
///
/// A full lexicographic grid of `grid_points` values per free dimension is
/// evaluated first; ties keep the lexicographically smallest vector. Nelder-Mead
/// rounds then refine from the best grid point, restarting with ever smaller
/// initial steps, until a round at the smallest step improves RMSE by less than
/// `tolerance_db`.
pub fn fit_params<T: Scalar>(spec: &FitSpec<T>) -> Result<FitResult<T>> {
    let dims = spec.free.len();
    if !(1..=4).contains(&dims) {
        return Err(Error::InvalidParams(format!(
            "between 1 and 4 free parameters supported, got {dims}"
        )));
    }
    if spec.config.grid_points < 2 {
        return Err(Error::InvalidParams("grid needs at least 2 points per dimension".into()));
    }
    let layout = Layout::new(spec)?;
    let data = finite_observations(&spec.dataset);
    if data.is_empty() {
        return Err(Error::Fit("dataset has no usable records".into()));
    }
    let objective = Objective::new(spec.kind, &data, spec.carrier_frequency_ghz, spec.options)?;
    let eval = |free: &[T]| objective.at(&layout.expand(free));

    let g = spec.config.grid_points;
    let total = g.pow(dims as u32);
    if total > spec.config.max_evaluations {
        return Err(Error::Fit(format!(
            "evaluation budget {} is smaller than the {total}-point coarse grid",
            spec.config.max_evaluations
        )));
    }
    let point = |mut idx: usize| -> Vec<T> {
        let mut x = vec![T::zero(); dims];
        for d in (0..dims).rev() {
            x[d] = grid_value(&spec.free[d], idx % g, g);
            idx /= g;
        }
        x
    };
    let values: Vec<T> = (0..total)
        .into_par_iter()
        .map(|i| {
            let v = eval(&point(i));
            if v.is_nan() {
                T::infinity()
            } else {
                v
            }
        })
        .collect();
    // first strict minimum in lexicographic order
    let mut best_i = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best_i] {
            best_i = i;
        }
    }
    let mut x = point(best_i);
    let mut f = values[best_i];
    let mut evaluations = total;
    if !f.is_finite() {
        return Err(Error::Fit(format!("{}: objective is not finite anywhere on the grid", spec.kind)));
    }

    let lower: Vec<T> = spec.free.iter().map(|p| p.lower).collect();
    let upper: Vec<T> = spec.free.iter().map(|p| p.upper).collect();
    let spacing: Vec<T> = spec
        .free
        .iter()
        .map(|p| (p.upper - p.lower) / T::from_count(g - 1))
        .collect();
    let tol = T::lit(spec.config.tolerance_db);
    let inner_tol = T::lit(1e-12);
    // A simplex projected onto a bound can flatten into that face and stall;
    // rounds that stop improving restart with a smaller initial step.
    let mut scale = T::one();
    let min_scale = T::lit(MIN_STEP_SCALE);
    let shrink = T::lit(0.1);
    let mut converged = false;
    for _ in 0..spec.config.max_rounds {
        let budget = spec.config.max_evaluations.saturating_sub(evaluations);
        if budget < dims + 1 {
            break;
        }
        let step: Vec<T> = spacing.iter().map(|&s| s * scale).collect();
        let out = simplex::nelder_mead(&eval, &x, f, &step, &lower, &upper, inner_tol, budget);
        evaluations += out.evaluations;
        let improvement = f - out.f;
        if out.f < f {
            x = out.x;
            f = out.f;
        }
        if out.exhausted {
            break;
        }
        if improvement < tol {
            if scale <= min_scale {
                converged = true;
                break;
            }
            scale = scale * shrink;
        }
    }
    if !converged {
        log::warn!("{}: refinement stopped before converging", spec.kind);
    }

    for (d, p) in spec.free.iter().enumerate() {
        let probe = |v: T| {
            let mut y = x.clone();
            y[d] = v;
            eval(&y)
        };
        let flat_eps = T::lit(1e-12) * (T::one() + f.abs());
        let flat = [p.lower, p.upper]
            .into_iter()
            .all(|v| (probe(v) - f).abs() <= flat_eps);
        evaluations += 2;
        if flat {
            log::warn!(
                "{}: objective is flat in `{}`; its fitted value {} is arbitrary",
                spec.kind,
                p.name,
                x[d]
            );
            converged = false;
        }
    }

    let params = ModelParams::from_values(spec.kind, &layout.expand(&x))?;
    Ok(FitResult {
        rmse_db: objective.rmse(&params)?,
        params,
        objective_evaluations: evaluations,
        converged,
    })
}

/// Default search box for one parameter.
pub fn default_bounds<T: Scalar>(name: &str) -> (T, T) {
    let (lo, hi) = match name {
        "max_attenuation_db" => (1.0, 100.0),
        "specific_attenuation_db_per_m" => (0.01, 20.0),
        "breakpoint_m" | "breakpoint_m2" => (1.0, 100.0),
        "jump_db" | "loss_per_tree_db" => (0.0, 60.0),
        _ => (0.0, 20.0),
    };
    (T::lit(lo), T::lit(hi))
}

/// Settings for fitting a list of models.
#[derive(Debug, Clone)]
pub struct FitAllConfig<T> {
    pub carrier_frequency_ghz: T,
    pub options: ModelOptions,
    pub fit: FitConfig,
    /// Per-model bound overrides, keyed by parameter name.
    pub bounds: BTreeMap<ModelKind, BTreeMap<String, (T, T)>>,
    /// Per-model fixed values; A1's breakpoint defaults to 14 m.
    pub fixed: BTreeMap<ModelKind, BTreeMap<String, T>>,
}

impl<T: Scalar> FitAllConfig<T> {
    pub fn new(carrier_frequency_ghz: T) -> Self {
        let mut fixed = BTreeMap::new();
        fixed.insert(
            ModelKind::A1,
            BTreeMap::from([("breakpoint_m".to_owned(), T::lit(WMED_BREAKPOINT_M))]),
        );
        Self {
            carrier_frequency_ghz,
            options: ModelOptions::default(),
            fit: FitConfig::default(),
            bounds: BTreeMap::new(),
            fixed,
        }
    }

    /// Fit specification for `kind` using this configuration's bounds and fixed values.
    pub fn spec(&self, kind: ModelKind, dataset: &[Observation<T>]) -> FitSpec<T> {
        let fixed_for = self.fixed.get(&kind);
        let bounds_for = self.bounds.get(&kind);
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        for &name in kind.parameter_names() {
            if let Some(&v) = fixed_for.and_then(|m| m.get(name)) {
                fixed.push((name.to_owned(), v));
                continue;
            }
            let (lo, hi) = bounds_for
                .and_then(|m| m.get(name).copied())
                .unwrap_or_else(|| default_bounds(name));
            free.push(FreeParameter::new(name, lo, hi));
        }
        FitSpec {
            kind,
            free,
            fixed,
            dataset: dataset.to_vec(),
            carrier_frequency_ghz: self.carrier_frequency_ghz,
            options: self.options,
            config: self.fit.clone(),
        }
    }
}

/// Fits every requested model independently. Closed form for AF, plain
/// evaluation for FSPL and WMED, bounded search for the rest.
pub fn fit_all<T: Scalar>(
    dataset: &[Observation<T>],
    models: &[ModelKind],
    config: &FitAllConfig<T>,
) -> Vec<(ModelKind, Result<FitResult<T>>)> {
    models
        .iter()
        .map(|&kind| {
            let result = if dataset.is_empty() {
                Err(Error::Fit("empty dataset".into()))
            } else {
                match kind {
                    ModelKind::Fspl => evaluate_fixed(dataset, ModelParams::Fspl {}, config.carrier_frequency_ghz, config.options),
                    ModelKind::Wmed => evaluate_fixed(dataset, ModelParams::Wmed {}, config.carrier_frequency_ghz, config.options),
                    ModelKind::Af => fit_af_closed_form(dataset, config.carrier_frequency_ghz),
                    _ => {
                        let spec = config.spec(kind, dataset);
                        if spec.free.is_empty() {
                            ModelParams::from_values(kind, &spec.fixed.iter().map(|(_, v)| *v).collect::<Vec<_>>())
                                .and_then(|p| evaluate_fixed(dataset, p, config.carrier_frequency_ghz, config.options))
                        } else {
                            fit_params(&spec)
                        }
                    }
                }
            };
            if let Err(e) = &result {
                log::error!("{kind}: {e}");
            }
            (kind, result)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::predict;

    fn feats(d: f64, df: f64, n: usize) -> SiteFeatures<f64> {
        SiteFeatures {
            distance_3d: d,
            woodland_depth: (d - 15.0).max(0.0),
            foliage_depth: df,
            foliage_area: df * 0.5,
            trunk_count: n,
        }
    }

    fn synth(params: ModelParams<f64>, xs: impl Iterator<Item = (f64, f64, usize)>) -> Vec<Observation<f64>> {
        xs.map(|(d, df, n)| {
            let features = feats(d, df, n);
            let p = predict(&features, &params, 28.0, &ModelOptions::default()).unwrap();
            Observation {
                features,
                measured_db: p.total_db,
            }
        })
        .collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse::<f64>(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 3.5355).abs() < 1e-4);
        assert_eq!(rmse(&[0.0], &[5.0]).unwrap(), 5.0);
        assert!(rmse::<f64>(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn af_closed_form_examples() {
        let data = synth(
            ModelParams::Af { loss_per_tree_db: 5.0 },
            (0..50).map(|i| (20.0 + i as f64, 0.0, i % 7)),
        );
        let fit = fit_af_closed_form(&data, 28.0).unwrap();
        assert!((fit.params.get("loss_per_tree_db").unwrap() - 5.0).abs() < 1e-9);
        assert!(fit.converged);

        let base = fspl(40.0, 28.0).unwrap();
        let one = [Observation {
            features: feats(40.0, 0.0, 2),
            measured_db: base + 10.0,
        }];
        let fit = fit_af_closed_form(&one, 28.0).unwrap();
        assert!((fit.params.get("loss_per_tree_db").unwrap() - 5.0).abs() < 1e-9);

        let none = synth(ModelParams::Fspl {}, (0..5).map(|i| (20.0 + i as f64, 0.0, 0)));
        assert!(fit_af_closed_form(&none, 28.0).is_err());
    }

    #[test]
    fn af_negative_estimate_clamps() {
        let base = fspl(40.0, 28.0).unwrap();
        let data = [Observation {
            features: feats(40.0, 0.0, 2),
            measured_db: base - 10.0,
        }];
        let fit = fit_af_closed_form(&data, 28.0).unwrap();
        assert_eq!(fit.params.get("loss_per_tree_db"), Some(0.0));
    }

    #[test]
    fn itu_noiseless_recovery() {
        let truth = ModelParams::reference(ModelKind::Itu);
        let data = synth(truth, (0..200).map(|i| (5.0 + i as f64 * 0.5, 0.0, 0)));
        let config = FitAllConfig::new(28.0);
        let fit = fit_params(&config.spec(ModelKind::Itu, &data)).unwrap();
        for (got, want) in fit.params.values().iter().zip(truth.values()) {
            assert!(((got - want) / want).abs() < 0.01, "{got} vs {want}");
        }
        assert!(fit.converged);
        assert!(fit.rmse_db < 1e-3);
    }

    #[test]
    fn flat_parameter_is_flagged() {
        // every foliage depth below the smallest admissible breakpoint: A2 ignores D_f
        let truth = ModelParams::A2 {
            l1_db_per_m: 2.0,
            breakpoint_m: 5.0,
        };
        let data = synth(truth, (0..40).map(|i| (30.0 + i as f64, 0.02 * i as f64, 0)));
        let config = FitAllConfig::new(28.0);
        let fit = fit_params(&config.spec(ModelKind::A2, &data)).unwrap();
        assert!(!fit.converged);
        assert!((fit.params.get("l1_db_per_m").unwrap() - 2.0).abs() < 0.01);
    }

    #[test]
    fn spec_validation() {
        let data = synth(ModelParams::Fspl {}, (0..5).map(|i| (20.0 + i as f64, 1.0, 0)));
        let mut spec = FitAllConfig::new(28.0).spec(ModelKind::A1, &data);
        assert_eq!(spec.free.len(), 2);
        spec.fixed.push(("l1_db_per_m".into(), 1.0));
        assert!(fit_params(&spec).is_err());

        let mut spec = FitAllConfig::new(28.0).spec(ModelKind::B, &data);
        spec.free[0].upper = spec.free[0].lower;
        assert!(fit_params(&spec).is_err());

        let mut spec = FitAllConfig::new(28.0).spec(ModelKind::B, &data);
        spec.config.max_evaluations = 100;
        assert!(matches!(fit_params(&spec), Err(Error::Fit(_))));

        let mut spec = FitAllConfig::new(28.0).spec(ModelKind::B, &data);
        spec.fixed.clear();
        spec.free.pop();
        assert!(fit_params(&spec).is_err());
    }

    #[test]
    fn fit_all_dispatch() {
        let data = synth(ModelParams::reference(ModelKind::B), (0..60).map(|i| (20.0 + i as f64, i as f64, i % 3)));
        let config = FitAllConfig::new(28.0);
        assert!(fit_all(&data, &[], &config).is_empty());
        let out = fit_all(&data, &[ModelKind::Fspl], &config);
        let fit = out[0].1.as_ref().unwrap();
        assert!(fit.converged && fit.params.values().is_empty());
        assert!(fit_all(&[], &[ModelKind::Fspl], &config)[0].1.is_err());
    }

    #[test]
    fn fit_result_document() {
        let fit = FitResult {
            params: ModelParams::<f64>::reference(ModelKind::B),
            rmse_db: 2.0,
            objective_evaluations: 300,
            converged: true,
        };
        let doc = serde_json::to_string(&fit).unwrap();
        assert_eq!(
            doc,
            r#"{"model":"B","max_attenuation_db":38.04,"specific_attenuation_db_per_m":4.47,"rmse_db":2.0,"objective_evaluations":300,"converged":true}"#
        );
        let back: FitResult<f64> = serde_json::from_str(&doc).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn non_finite_records_are_dropped() {
        let mut data = synth(ModelParams::Fspl {}, (0..5).map(|i| (20.0 + i as f64, 1.0, 0)));
        data[2].features.foliage_depth = f64::NAN;
        assert_eq!(finite_observations(&data).len(), 4);
        let fit = evaluate_fixed(&data, ModelParams::Fspl {}, 28.0, ModelOptions::default()).unwrap();
        assert_eq!(fit.rmse_db, 0.0);
    }
}
