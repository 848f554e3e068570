//! Project configuration: a JSON document plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use foliage_core::evaluation::FeatureAxis;
use foliage_core::models::{ModelCMode, ModelKind, WmedMode};
use foliage_core::Point;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terrain_grid: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lidar_grid: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunks_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Regional comparison against one baseline model along one feature axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub model: ModelKind,
    pub axis: FeatureAxis,
}

fn default_frequency() -> f64 {
    28.0
}
fn default_offset() -> f64 {
    foliage_core::geodata::DEFAULT_WOODLAND_EDGE_OFFSET_M
}
fn default_threshold() -> f64 {
    foliage_core::geodata::DEFAULT_HEIGHT_THRESHOLD_M
}
fn default_samples() -> usize {
    foliage_core::geometry::DEFAULT_SAMPLES_PER_CELL
}
fn default_window() -> f64 {
    foliage_core::evaluation::DEFAULT_WINDOW_WIDTH
}
fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub paths: Paths,
    pub tx_position: Point,
    #[serde(default = "default_frequency")]
    pub carrier_frequency_ghz: f64,
    #[serde(default = "default_offset")]
    pub woodland_edge_offset_m: f64,
    #[serde(default = "default_threshold")]
    pub foliage_height_threshold_m: f64,
    #[serde(default = "default_samples")]
    pub samples_per_cell: usize,
    #[serde(default = "default_window")]
    pub window_width: f64,
    /// When set, regional reports use sliding windows advancing by this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sliding_window_step: Option<f64>,
    #[serde(default)]
    pub wmed_mode: WmedMode,
    #[serde(default)]
    pub model_c_mode: ModelCMode,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    /// Search-box overrides: model name -> parameter name -> [lower, upper].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fit_bounds: BTreeMap<ModelKind, BTreeMap<String, [f64; 2]>>,
    /// Comparison baselines; defaults to ITU on d_w and WMED on d_f.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<Vec<Baseline>>,
}

impl ProjectConfig {
    pub fn new(tx_position: Point) -> Self {
        Self {
            paths: Paths::default(),
            tx_position,
            carrier_frequency_ghz: default_frequency(),
            woodland_edge_offset_m: default_offset(),
            foliage_height_threshold_m: default_threshold(),
            samples_per_cell: default_samples(),
            window_width: default_window(),
            sliding_window_step: None,
            wmed_mode: WmedMode::default(),
            model_c_mode: ModelCMode::default(),
            models: default_models(),
            fit_bounds: BTreeMap::new(),
            baselines: None,
        }
    }

    /// Reads a config document; relative paths resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: ProjectConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.paths.terrain_grid,
            &mut config.paths.lidar_grid,
            &mut config.paths.trunks_csv,
            &mut config.paths.measurements_csv,
            &mut config.paths.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.carrier_frequency_ghz.is_finite() && self.carrier_frequency_ghz > 0.0) {
            bail!("carrier_frequency_ghz must be positive");
        }
        if !(self.woodland_edge_offset_m.is_finite() && self.woodland_edge_offset_m >= 0.0) {
            bail!("woodland_edge_offset_m must be nonnegative");
        }
        if !(self.foliage_height_threshold_m.is_finite() && self.foliage_height_threshold_m > 0.0) {
            bail!("foliage_height_threshold_m must be positive");
        }
        if self.samples_per_cell < 2 {
            bail!("samples_per_cell must be at least 2");
        }
        if !(self.window_width.is_finite() && self.window_width > 0.0) {
            bail!("window_width must be positive");
        }
        if !self.tx_position.is_finite() {
            bail!("tx_position must be finite");
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn required(path: &Option<PathBuf>, key: &str) -> anyhow::Result<PathBuf> {
        path.clone()
            .with_context(|| format!("config is missing paths.{key}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let c: ProjectConfig = serde_json::from_str(r#"{"tx_position":{"x":1,"y":2,"z":3}}"#).unwrap();
        assert_eq!(c.carrier_frequency_ghz, 28.0);
        assert_eq!(c.woodland_edge_offset_m, 15.0);
        assert_eq!(c.foliage_height_threshold_m, 2.0);
        assert_eq!(c.samples_per_cell, 4);
        assert_eq!(c.window_width, 10.0);
        assert_eq!(c.models.len(), 8);
        assert_eq!(c.wmed_mode, WmedMode::Strict);
        assert_eq!(c.model_c_mode, ModelCMode::Continuous);
        c.validate().unwrap();
    }

    #[test]
    fn full_document_round_trips() {
        let doc = r#"{
            "paths": {"terrain_grid": "t.asc", "output_dir": "out"},
            "tx_position": {"x": 1, "y": 2, "z": 3},
            "models": ["FSPL", "A-I", "B"],
            "wmed_mode": "extrapolate",
            "model_c_mode": "paper_literal",
            "fit_bounds": {"B": {"max_attenuation_db": [10, 60]}},
            "baselines": [{"model": "ITU", "axis": "d_w"}]
        }"#;
        let c: ProjectConfig = serde_json::from_str(doc).unwrap();
        assert_eq!(c.models, [ModelKind::Fspl, ModelKind::A1, ModelKind::B]);
        assert_eq!(c.fit_bounds[&ModelKind::B]["max_attenuation_db"], [10.0, 60.0]);
        let again: ProjectConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
        assert!(serde_json::from_str::<ProjectConfig>(r#"{"tx_position":{"x":1,"y":2,"z":3},"bogus":1}"#).is_err());
    }
}
