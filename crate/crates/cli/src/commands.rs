//! Subcommand implementations. Each reads its inputs from files named in the
//! project config and materializes its outputs in the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _};
use foliage_core::evaluation::{
    compare_models, evaluate_overall, evaluate_regional, export_plot_data, scatter_points, FeatureAxis,
    PlotData, Windowing,
};
use foliage_core::fitting::{fit_all, FitAllConfig};
use foliage_core::geodata::{
    check_alignment, extract_foliage_mask, fetch_elevation_tiles, parse_ascii_grid, read_measurements,
    read_trunks, resample_nearest, write_ascii_grid, BoundingBox, FetchOptions,
};
use foliage_core::geometry::{read_features, write_features, FeatureExtractor, FeatureRow};
use foliage_core::models::{predict as predict_loss, ModelCMode, ModelKind, ModelOptions, WmedMode};
use foliage_core::synth::{self, generate_scene, SceneConfig};
use foliage_core::{Fit, Grid, Observation, Params, Point, Site, Trunks};
use rayon::prelude::*;
use serde::Deserialize;

use crate::config::{Baseline, ProjectConfig};
use crate::Overrides;

pub const MASK_FILE: &str = "foliage_mask.asc";
pub const FEATURES_FILE: &str = "features.csv";
pub const FIT_RESULTS_FILE: &str = "fit_results.json";
pub const EVALUATION_DIR: &str = "evaluation";
pub const OVERALL_FILE: &str = "overall.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TILES_DIR: &str = "tiles";
pub const CONFIG_FILE: &str = "config.json";
const LOCK_FILE: &str = ".foliage.lock";

pub struct Context {
    pub config_path: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub overrides: Overrides,
    pub jobs: Option<usize>,
}

impl Context {
    fn load(&self) -> anyhow::Result<ProjectConfig> {
        let path = self
            .config_path
            .as_deref()
            .ok_or_else(|| anyhow!("no project config given; pass --config <path>"))?;
        let mut config = ProjectConfig::load(path)?;
        self.apply(&mut config)?;
        config.validate()?;
        Ok(config)
    }

    fn apply(&self, c: &mut ProjectConfig) -> anyhow::Result<()> {
        let o = &self.overrides;
        if let Some(v) = o.carrier_frequency_ghz {
            c.carrier_frequency_ghz = v;
        }
        if let Some(v) = o.woodland_edge_offset_m {
            c.woodland_edge_offset_m = v;
        }
        if let Some(v) = o.foliage_height_threshold_m {
            c.foliage_height_threshold_m = v;
        }
        if let Some(v) = o.samples_per_cell {
            c.samples_per_cell = v;
        }
        if let Some(v) = o.window_width {
            c.window_width = v;
        }
        if let Some(v) = &o.wmed_mode {
            c.wmed_mode = match v.as_str() {
                "strict" => WmedMode::Strict,
                "extrapolate" => WmedMode::Extrapolate,
                other => bail!("unknown wmed mode `{other}`"),
            };
        }
        if let Some(v) = &o.model_c_mode {
            c.model_c_mode = match v.as_str() {
                "continuous" => ModelCMode::Continuous,
                "paper_literal" => ModelCMode::PaperLiteral,
                other => bail!("unknown model C mode `{other}`"),
            };
        }
        if let Some(names) = &o.models {
            c.models = names
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse())
                .collect::<Result<_, _>>()?;
        }
        if let Some(out) = &self.output {
            c.paths.output_dir = Some(out.clone());
        }
        Ok(())
    }
}

/// Advisory lock held for the lifetime of a command writing into a directory.
struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    fn acquire(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is in use by another run (remove {} if it is stale)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn options(c: &ProjectConfig) -> ModelOptions {
    ModelOptions {
        wmed_mode: c.wmed_mode,
        model_c_mode: c.model_c_mode,
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_grid(path: &Path) -> anyhow::Result<Grid> {
    parse_ascii_grid(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn open(path: &Path) -> anyhow::Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn write_file(path: &Path, body: &[u8]) -> anyhow::Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn site(c: &ProjectConfig) -> anyhow::Result<Site> {
    Ok(Site::new(c.tx_position, c.carrier_frequency_ghz, c.woodland_edge_offset_m)?)
}

fn load_mask(out: &Path) -> anyhow::Result<Grid> {
    let path = out.join(MASK_FILE);
    if !path.exists() {
        bail!("foliage mask {} not found; run `foliage` first", path.display());
    }
    read_grid(&path)
}

fn load_trunks(c: &ProjectConfig) -> anyhow::Result<Trunks> {
    let path = ProjectConfig::required(&c.paths.trunks_csv, "trunks_csv")?;
    read_trunks(open(&path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_observations(out: &Path) -> anyhow::Result<Vec<Observation>> {
    let path = out.join(FEATURES_FILE);
    if !path.exists() {
        bail!("features {} not found; run `features` first", path.display());
    }
    let rows = read_features::<f64, _>(open(&path)?).with_context(|| format!("parsing {}", path.display()))?;
    let total = rows.len();
    let obs: Vec<Observation> = rows
        .into_iter()
        .filter_map(|r| {
            r.features.map(|features| Observation {
                features,
                measured_db: r.record.path_loss_db,
            })
        })
        .collect();
    if obs.len() < total {
        log::warn!("{} feature row(s) carry error markers and are skipped", total - obs.len());
    }
    Ok(obs)
}

fn load_fits(path: &Path) -> anyhow::Result<Vec<Fit>> {
    if !path.exists() {
        bail!("fit results {} not found; run `fit` first", path.display());
    }
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn foliage(ctx: &Context, resample: bool) -> anyhow::Result<()> {
    let c = ctx.load()?;
    let terrain = read_grid(&ProjectConfig::required(&c.paths.terrain_grid, "terrain_grid")?)?;
    let mut lidar = read_grid(&ProjectConfig::required(&c.paths.lidar_grid, "lidar_grid")?)?;
    if !check_alignment(&lidar, &terrain) {
        if !resample {
            bail!("terrain and lidar grids are misaligned; rerun with --resample to resample lidar onto the terrain grid");
        }
        log::info!("resampling lidar onto the terrain grid");
        lidar = resample_nearest(&lidar, &terrain)?;
    }
    let mask = extract_foliage_mask(&lidar, &terrain, c.foliage_height_threshold_m)?;
    let out = c.output_dir();
    let _lock = OutputLock::acquire(&out)?;
    write_file(&out.join(MASK_FILE), write_ascii_grid(&mask.grid).as_bytes())?;
    println!(
        "{} foliage cells, {} total cells, {} nodata cells",
        mask.foliage_cells,
        mask.grid.len(),
        mask.nodata_cells
    );
    Ok(())
}

pub fn features(ctx: &Context) -> anyhow::Result<()> {
    let c = ctx.load()?;
    let out = c.output_dir();
    let mask = load_mask(&out)?;
    let trunks = load_trunks(&c)?;
    let path = ProjectConfig::required(&c.paths.measurements_csv, "measurements_csv")?;
    let records = read_measurements::<f64, _>(open(&path)?).with_context(|| format!("parsing {}", path.display()))?;
    let extractor = FeatureExtractor::new(site(&c)?, &mask, &trunks, c.samples_per_cell)?;
    let rows: Vec<FeatureRow<f64>> = records
        .into_par_iter()
        .enumerate()
        .map(|(i, record)| {
            let features = match extractor.compute(&record.position) {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!("record {} (track {}): {e}", i + 1, record.track_id);
                    None
                }
            };
            FeatureRow { record, features }
        })
        .collect();
    let failed = rows.iter().filter(|r| r.features.is_none()).count();
    let _lock = OutputLock::acquire(&out)?;
    let mut buf = Vec::new();
    write_features(&rows, &mut buf)?;
    write_file(&out.join(FEATURES_FILE), &buf)?;
    println!("{} records, {} with error markers", rows.len(), failed);
    Ok(())
}

fn fit_config(c: &ProjectConfig) -> anyhow::Result<FitAllConfig<f64>> {
    let mut config = FitAllConfig::new(c.carrier_frequency_ghz);
    config.options = options(c);
    for (kind, overrides) in &c.fit_bounds {
        let entry = config.bounds.entry(*kind).or_default();
        for (name, [lo, hi]) in overrides {
            if !kind.parameter_names().contains(&name.as_str()) {
                bail!("fit_bounds: model {} has no parameter `{name}`", kind.name());
            }
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                bail!("fit_bounds: {}.{name} needs finite lower < upper", kind.name());
            }
            entry.insert(name.clone(), (*lo, *hi));
        }
    }
    Ok(config)
}

fn format_params(p: &Params) -> String {
    p.kind()
        .parameter_names()
        .iter()
        .zip(p.values())
        .map(|(n, v)| format!("{n}={v:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn fit(ctx: &Context) -> anyhow::Result<()> {
    let c = ctx.load()?;
    if c.models.is_empty() {
        bail!("no models configured");
    }
    let out = c.output_dir();
    let obs = load_observations(&out)?;
    let config = fit_config(&c)?;
    let results = fit_all(&obs, &c.models, &config);
    let mut fits = Vec::new();
    println!("{:<6} {:>10}  {:<9}  parameters", "model", "rmse_db", "converged");
    for (kind, result) in results {
        match result {
            Ok(fit) => {
                println!(
                    "{:<6} {:>10.4}  {:<9}  {}",
                    kind.name(),
                    fit.rmse_db,
                    fit.converged,
                    format_params(&fit.params)
                );
                if !fit.converged {
                    log::warn!("model {}: search did not converge cleanly", kind.name());
                }
                fits.push(fit);
            }
            Err(e) => {
                println!("{:<6} {:>10}  {:<9}  {e}", kind.name(), "failed", "-");
                log::error!("model {}: {e}", kind.name());
            }
        }
    }
    let _lock = OutputLock::acquire(&out)?;
    let mut doc = serde_json::to_string_pretty(&fits)?;
    doc.push('\n');
    write_file(&out.join(FIT_RESULTS_FILE), doc.as_bytes())
}

fn default_baselines() -> Vec<Baseline> {
    vec![
        Baseline {
            model: ModelKind::Itu,
            axis: FeatureAxis::WoodlandDepth,
        },
        Baseline {
            model: ModelKind::Wmed,
            axis: FeatureAxis::FoliageDepth,
        },
    ]
}

fn overall_csv(reports: &[foliage_core::Report]) -> Vec<u8> {
    let mut s = String::from("model,overall_rmse_db,mean_error_db,sample_count\n");
    for r in reports {
        s.push_str(&format!(
            "{},{:.4},{:.4},{}\n",
            r.model_name, r.overall_rmse_db, r.mean_error_db, r.sample_count
        ));
    }
    s.into_bytes()
}

pub fn evaluate(ctx: &Context, params: Option<PathBuf>) -> anyhow::Result<()> {
    let c = ctx.load()?;
    let out = c.output_dir();
    let fits = load_fits(&params.unwrap_or_else(|| out.join(FIT_RESULTS_FILE)))?;
    let fits: Vec<Fit> = fits.into_iter().filter(|f| c.models.contains(&f.params.kind())).collect();
    if fits.is_empty() {
        bail!("fit results contain none of the configured models");
    }
    let obs = load_observations(&out)?;
    let f = c.carrier_frequency_ghz;
    let opts = options(&c);
    let reports = fits
        .iter()
        .map(|fit| evaluate_overall(&obs, &fit.params, f, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        println!("{:<6} rmse {:.4} dB over {} records", r.model_name, r.overall_rmse_db, r.sample_count);
    }
    let dir = out.join(EVALUATION_DIR);
    let _lock = OutputLock::acquire(&out)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(&dir.join(OVERALL_FILE), &overall_csv(&reports))?;
    if fits.len() < 2 {
        return Ok(());
    }

    let mut axes = vec![FeatureAxis::WoodlandDepth, FeatureAxis::FoliageDepth];
    if fits.iter().any(|f| f.params.kind() == ModelKind::C) {
        axes.push(FeatureAxis::FoliageArea);
    }
    let windowing = match c.sliding_window_step {
        Some(step) => Windowing::Sliding { step },
        None => Windowing::Tumbling,
    };
    for &axis in &axes {
        for fit in &fits {
            let stem = format!("{}_{}", axis.name(), fit.params.kind().name().to_lowercase());
            let report = evaluate_regional(&obs, &fit.params, f, &opts, axis, c.window_width, windowing)?;
            export_plot_data(PlotData::Regional(&report), &dir.join(format!("regional_{stem}.csv")))?;
            let points = scatter_points(&obs, &fit.params, f, &opts, axis)?;
            export_plot_data(PlotData::Scatter(&points), &dir.join(format!("scatter_{stem}.csv")))?;
        }
    }

    let explicit = c.baselines.is_some();
    let fitted = |kind: ModelKind| fits.iter().any(|f| f.params.kind() == kind);
    for b in c.baselines.clone().unwrap_or_else(default_baselines) {
        if !fitted(b.model) {
            if explicit {
                bail!("baseline {} is not among the fitted models", b.model.name());
            }
            continue;
        }
        let cmp = compare_models(&obs, &fits, f, &opts, b.axis, c.window_width, b.model.name())?;
        let name = format!("comparison_{}_vs_{}.csv", b.axis.name(), b.model.name().to_lowercase());
        export_plot_data(PlotData::Comparison(&cmp), &dir.join(name))?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct RxRow {
    rx_id: String,
    easting_m: f64,
    northing_m: f64,
    altitude_m: f64,
}

fn fixed_or_nan(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_owned(), |v| format!("{v:.4}"))
}

pub fn predict(ctx: &Context, rx: &Path, params: Option<PathBuf>) -> anyhow::Result<()> {
    let c = ctx.load()?;
    if c.models.is_empty() {
        bail!("no models configured");
    }
    let out = c.output_dir();
    let params_path = params.unwrap_or_else(|| out.join(FIT_RESULTS_FILE));
    let needs_fit = c.models.iter().any(|k| !k.parameter_names().is_empty());
    let fits = if params_path.exists() || needs_fit {
        load_fits(&params_path)?
    } else {
        Vec::new()
    };
    let params: Vec<Params> = c
        .models
        .iter()
        .map(|&kind| {
            fits.iter()
                .find(|f| f.params.kind() == kind)
                .map(|f| f.params)
                .or_else(|| kind.parameter_names().is_empty().then(|| Params::reference(kind)))
                .ok_or_else(|| anyhow!("no fitted parameters for model {}", kind.name()))
        })
        .collect::<anyhow::Result<_>>()?;

    let mask = load_mask(&out)?;
    let trunks = load_trunks(&c)?;
    let extractor = FeatureExtractor::new(site(&c)?, &mask, &trunks, c.samples_per_cell)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(rx)?);
    let rows: Vec<RxRow> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {}", rx.display()))?;
    let opts = options(&c);
    let lines: Vec<String> = rows
        .par_iter()
        .map(|r| {
            let pos = Point::new(r.easting_m, r.northing_m, r.altitude_m);
            let mut fields = vec![r.rx_id.clone()];
            match extractor.compute(&pos) {
                Ok(feat) => {
                    fields.push(format!("{:.4}", feat.distance_3d));
                    for p in &params {
                        let v = match predict_loss(&feat, p, c.carrier_frequency_ghz, &opts) {
                            Ok(pred) => Some(pred.total_db),
                            Err(e) => {
                                log::warn!("rx {}: model {}: {e}", r.rx_id, p.kind().name());
                                None
                            }
                        };
                        fields.push(fixed_or_nan(v));
                    }
                }
                Err(e) => {
                    log::warn!("rx {}: {e}", r.rx_id);
                    fields.extend(std::iter::repeat_n("NaN".to_owned(), params.len() + 1));
                }
            }
            fields.join(",")
        })
        .collect();
    let mut body = String::from("rx_id,distance_m");
    for k in &c.models {
        body.push_str(&format!(",{}_db", k.name()));
    }
    body.push('\n');
    for line in &lines {
        body.push_str(line);
        body.push('\n');
    }
    let _lock = OutputLock::acquire(&out)?;
    write_file(&out.join(PREDICTIONS_FILE), body.as_bytes())?;
    println!("{} receivers, {} models", lines.len(), params.len());
    Ok(())
}

pub fn fetch_dem(ctx: &Context, url_template: &str, bbox: &str, zoom: u32, retries: u32) -> anyhow::Result<()> {
    let out = match (&ctx.output, &ctx.config_path) {
        (Some(o), _) => o.clone(),
        (None, Some(_)) => ctx.load()?.output_dir(),
        (None, None) => PathBuf::from("."),
    };
    let bbox: BoundingBox = bbox.parse()?;
    let options = FetchOptions {
        zoom,
        retries,
        parallelism: ctx.jobs.unwrap_or(FetchOptions::default().parallelism),
        ..FetchOptions::default()
    };
    let _lock = OutputLock::acquire(&out)?;
    let dir = out.join(TILES_DIR);
    let tiles = fetch_elevation_tiles(url_template, &bbox, &dir, &options)?;
    println!("{} tiles in {}", tiles.len(), dir.display());
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2018)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub records: usize,
    /// Generating model; its reference constants are used unless --params is given.
    #[arg(long, default_value = "B")]
    pub model: String,
    /// Generating parameters as a JSON document, e.g. {"model":"ITU",...}.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    pub noise_sigma: f64,
}

pub fn synth(ctx: &Context, args: &SynthArgs) -> anyhow::Result<()> {
    let out = ctx.output.clone().unwrap_or_else(|| PathBuf::from("."));
    let generator: Params = match &args.params {
        Some(doc) => serde_json::from_str(doc).context("parsing --params")?,
        None => Params::reference(args.model.parse()?),
    };
    let cfg = SceneConfig {
        seed: args.seed,
        n_records: args.records,
        generator,
        noise_sigma_db: args.noise_sigma,
        ..SceneConfig::default()
    };
    let scene = generate_scene(&cfg)?;
    let _lock = OutputLock::acquire(&out)?;
    scene.write_to(&out)?;
    let mut config = ProjectConfig::new(scene.site.tx_position);
    config.carrier_frequency_ghz = cfg.carrier_frequency_ghz;
    config.woodland_edge_offset_m = scene.site.woodland_edge_offset_m;
    config.foliage_height_threshold_m = cfg.height_threshold_m;
    config.samples_per_cell = cfg.samples_per_cell;
    config.paths.terrain_grid = Some(synth::TERRAIN_FILE.into());
    config.paths.lidar_grid = Some(synth::LIDAR_FILE.into());
    config.paths.trunks_csv = Some(synth::TRUNKS_FILE.into());
    config.paths.measurements_csv = Some(synth::MEASUREMENTS_FILE.into());
    config.paths.output_dir = Some("results".into());
    let mut doc = serde_json::to_string_pretty(&config)?;
    doc.push('\n');
    write_file(&out.join(CONFIG_FILE), doc.as_bytes())?;
    println!(
        "scene with {} records and {} trunks written to {}",
        scene.measurements.len(),
        scene.trunks.len(),
        out.display()
    );
    Ok(())
}
