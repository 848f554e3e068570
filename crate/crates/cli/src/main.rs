use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod logging;

use commands::Context;

/// Site-specific foliage path-loss pipeline at millimeter-wave frequencies.
#[derive(Debug, Parser)]
#[command(name = "foliage", version)]
struct Cli {
    /// Project configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for feature extraction and fitting.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config's paths.output_dir.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Command-line overrides for config values.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub carrier_frequency_ghz: Option<f64>,
    #[arg(long, global = true)]
    pub woodland_edge_offset_m: Option<f64>,
    #[arg(long, global = true)]
    pub foliage_height_threshold_m: Option<f64>,
    #[arg(long, global = true)]
    pub samples_per_cell: Option<usize>,
    #[arg(long, global = true)]
    pub window_width: Option<f64>,
    /// strict | extrapolate
    #[arg(long, global = true)]
    pub wmed_mode: Option<String>,
    /// continuous | paper_literal
    #[arg(long, global = true)]
    pub model_c_mode: Option<String>,
    /// Comma-separated model names, e.g. FSPL,ITU,B.
    #[arg(long, global = true, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Threshold LiDAR minus terrain into a binary foliage mask.
    Foliage {
        /// Resample the LiDAR grid onto the terrain grid when they differ.
        #[arg(long)]
        resample: bool,
    },
    /// Compute blockage features for every measurement record.
    Features,
    /// Fit every configured model to the features and measurements.
    Fit,
    /// Overall and regional reports plus plot data for fitted models.
    Evaluate {
        /// Fit results document; defaults to fit_results.json in the output dir.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Predict path loss at new receiver positions.
    Predict {
        /// Receiver list with columns rx_id,easting_m,northing_m,altitude_m.
        #[arg(long)]
        rx: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Download elevation tiles covering a bounding box.
    FetchDem {
        /// URL with {z}/{x}/{y} or {bbox} placeholders.
        #[arg(long)]
        url_template: String,
        /// west,south,east,north in degrees.
        #[arg(long, allow_hyphen_values = true)]
        bbox: String,
        #[arg(long, default_value_t = 14)]
        zoom: u32,
        #[arg(long, default_value_t = 3)]
        retries: u32,
    },
    /// Generate a reproducible synthetic scene and a config that points at it.
    #[command(hide = true)]
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    logging::init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::FAILURE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let ctx = Context {
        config_path: cli.config,
        output: cli.output,
        overrides: cli.overrides,
        jobs: cli.jobs,
    };
    let outcome = match cli.command {
        Command::Foliage { resample } => commands::foliage(&ctx, resample),
        Command::Features => commands::features(&ctx),
        Command::Fit => commands::fit(&ctx),
        Command::Evaluate { params } => commands::evaluate(&ctx, params),
        Command::Predict { rx, params } => commands::predict(&ctx, &rx, params),
        Command::FetchDem { url_template, bbox, zoom, retries } => {
            commands::fetch_dem(&ctx, &url_template, &bbox, zoom, retries)
        }
        Command::Synth(args) => commands::synth(&ctx, &args),
    };
    let failed = match outcome {
        Ok(()) => false,
        Err(e) => {
            eprintln!("error: {e:#}");
            true
        }
    };
    let errors = logging::errors();
    eprintln!("summary: {} warning(s), {} error(s)", logging::warnings(), errors + usize::from(failed));
    if failed || errors > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
