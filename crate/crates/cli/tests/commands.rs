//! Subcommand behavior on small hand-built projects.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

const COLS: usize = 110;
const ROWS: usize = 10;

/// 110 x 10 one-meter grid anchored at the origin.
fn grid(value_at: impl Fn(usize, usize) -> f64) -> String {
    let mut s = format!("ncols {COLS}\nnrows {ROWS}\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n");
    for row in 0..ROWS {
        let line: Vec<String> = (0..COLS).map(|col| value_at(row, col).to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

struct Project {
    dir: tempfile::TempDir,
}

impl Project {
    /// Flat terrain at 100 m, TX at (0, 5, 110), no trunks, no measurements.
    fn new() -> Self {
        let p = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        p.write("terrain.asc", &grid(|_, _| 100.0));
        p.write("lidar.asc", &grid(|_, _| 100.0));
        p.write("trunks.csv", "easting_m,northing_m\n");
        p.write("measurements.csv", "track_id,easting_m,northing_m,altitude_m,path_loss_db\n");
        p.config(json!({}));
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, body: &str) {
        std::fs::write(self.path(name), body).unwrap();
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    /// Writes config.json from a base document merged with `extra`.
    fn config(&self, extra: serde_json::Value) {
        let mut doc = json!({
            "paths": {
                "terrain_grid": "terrain.asc",
                "lidar_grid": "lidar.asc",
                "trunks_csv": "trunks.csv",
                "measurements_csv": "measurements.csv",
                "output_dir": "out"
            },
            "tx_position": {"x": 0.0, "y": 5.0, "z": 110.0}
        });
        for (k, v) in extra.as_object().unwrap() {
            doc[k] = v.clone();
        }
        self.write("config.json", &serde_json::to_string_pretty(&doc).unwrap());
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.path("config.json");
        Command::new(env!("CARGO_BIN_EXE_foliage"))
            .arg("--config")
            .arg(&config)
            .args(args)
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", stdout(&o), stderr(&o));
    o
}

fn failed(o: Output) -> String {
    assert!(!o.status.success(), "expected failure; stdout:\n{}", stdout(&o));
    stderr(&o)
}

#[test]
fn identical_surfaces_have_no_foliage() {
    let p = Project::new();
    let out = ok(p.run(&["foliage"]));
    assert!(stdout(&out).starts_with("0 foliage cells, 1100 total cells, 0 nodata cells"));
    let mask = p.read("out/foliage_mask.asc");
    assert!(mask.lines().skip(6).all(|l| l.split(' ').all(|v| v == "0")));
}

#[test]
fn canopy_patch_is_counted() {
    let p = Project::new();
    p.write("terrain.asc", &grid(|_, _| 100.0));
    p.write("lidar.asc", &grid(|_, c| if c < 10 { 112.5 } else { 101.0 }));
    assert!(stdout(&ok(p.run(&["foliage"]))).starts_with("100 foliage cells"));
    p.write("lidar.asc", &grid(|r, c| if r < 4 && c < 5 { 110.0 } else { 101.0 }));
    assert!(stdout(&ok(p.run(&["foliage"]))).starts_with("20 foliage cells"));
}

#[test]
fn missing_lidar_is_named() {
    let p = Project::new();
    std::fs::remove_file(p.path("lidar.asc")).unwrap();
    assert!(failed(p.run(&["foliage"])).contains("lidar.asc"));
}

#[test]
fn misaligned_grids_suggest_resampling() {
    let p = Project::new();
    p.write("lidar.asc", &grid(|_, _| 105.0).replace("xllcorner 0", "xllcorner -0.5"));
    assert!(failed(p.run(&["foliage"])).contains("--resample"));
    let out = ok(p.run(&["foliage", "--resample"]));
    // the eastmost column falls outside the shifted lidar grid and becomes nodata
    assert!(stdout(&out).starts_with("1090 foliage cells, 1100 total cells, 10 nodata cells"), "{}", stdout(&out));
}

#[test]
fn features_require_the_mask() {
    let p = Project::new();
    assert!(failed(p.run(&["features"])).contains("run `foliage` first"));
}

#[test]
fn no_measurements_give_a_header_only_file() {
    let p = Project::new();
    ok(p.run(&["foliage"]));
    ok(p.run(&["features"]));
    assert_eq!(
        p.read("out/features.csv"),
        "track_id,easting_m,northing_m,altitude_m,path_loss_db,d_m,dw_m,df_m,af_m2,n_trunks\n"
    );
}

#[test]
fn single_receiver_features() {
    let p = Project::new();
    p.write(
        "measurements.csv",
        "track_id,easting_m,northing_m,altitude_m,path_loss_db\nT1,100,5,110,120\nT1,0,5,110,90\n",
    );
    ok(p.run(&["foliage"]));
    let out = ok(p.run(&["features"]));
    let lines: Vec<String> = p.read("out/features.csv").lines().map(str::to_owned).collect();
    assert_eq!(lines[1], "T1,100.0000,5.0000,110.0000,120.0000,100.0000,85.0000,0.0000,0.0000,0");
    // the second receiver sits on the transmitter
    assert_eq!(lines[2], "T1,0.0000,5.0000,110.0000,90.0000,NaN,NaN,NaN,NaN,NaN");
    assert!(stderr(&out).contains("summary: 1 warning(s), 0 error(s)"), "{}", stderr(&out));
}

#[test]
fn empty_model_list_is_rejected() {
    let p = Project::new();
    p.config(json!({"models": []}));
    assert!(failed(p.run(&["fit"])).contains("no models configured"));
}

fn measured_project() -> Project {
    let p = Project::new();
    p.write("lidar.asc", &grid(|_, c| if (3..7).contains(&c) { 115.0 } else { 100.0 }));
    p.write("trunks.csv", "easting_m,northing_m\n5.2,5.1\n");
    let mut m = String::from("track_id,easting_m,northing_m,altitude_m,path_loss_db\n");
    for k in 0..30 {
        let x = 1.0 + 0.3 * k as f64;
        let y = 1.0 + 0.25 * k as f64;
        m.push_str(&format!("T1,{x},{y},101.5,{}\n", 80.0 + k as f64));
    }
    p.write("measurements.csv", &m);
    ok(p.run(&["foliage"]));
    ok(p.run(&["features"]));
    p
}

#[test]
fn fspl_only_fit_has_one_parameterless_row() {
    let p = measured_project();
    let out = ok(p.run(&["--models", "FSPL", "fit"]));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("FSPL"));
    let doc: serde_json::Value = serde_json::from_str(&p.read("out/fit_results.json")).unwrap();
    assert_eq!(doc.as_array().unwrap().len(), 1);
    assert_eq!(doc[0]["model"], "FSPL");
}

#[test]
fn evaluate_without_fit_results_fails() {
    let p = measured_project();
    assert!(failed(p.run(&["evaluate"])).contains("fit_results.json"));
}

#[test]
fn single_model_evaluation_writes_only_the_overall_report() {
    let p = measured_project();
    p.config(json!({"models": ["FSPL"]}));
    ok(p.run(&["fit"]));
    ok(p.run(&["evaluate"]));
    let files: Vec<_> = std::fs::read_dir(p.path("out/evaluation")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, ["overall.csv"]);
    let overall = p.read("out/evaluation/overall.csv");
    assert!(overall.starts_with("model,overall_rmse_db,mean_error_db,sample_count\nFSPL,"));
}

#[test]
fn explicit_baseline_must_be_fitted() {
    let p = measured_project();
    p.config(json!({"models": ["FSPL", "B"], "baselines": [{"model": "ITU", "axis": "d_w"}]}));
    ok(p.run(&["fit"]));
    assert!(failed(p.run(&["evaluate"])).contains("baseline ITU"));
}

fn header_of(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(str::to_owned).collect()
}

#[test]
fn full_synthetic_run_compares_every_other_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let synth = Command::new(env!("CARGO_BIN_EXE_foliage"))
        .args(["synth", "--output", d, "--records", "300"])
        .output()
        .unwrap();
    ok(synth);
    let config = dir.path().join("config.json");
    for cmd in ["foliage", "features", "fit", "evaluate"] {
        ok(Command::new(env!("CARGO_BIN_EXE_foliage"))
            .arg("--config")
            .arg(&config)
            .arg(cmd)
            .output()
            .unwrap());
    }
    let eval = dir.path().join("results/evaluation");
    for (file, baseline) in [("comparison_d_w_vs_itu.csv", "ITU"), ("comparison_d_f_vs_wmed.csv", "WMED")] {
        let header = header_of(&eval.join(file));
        let improvements: Vec<_> = header.iter().filter(|h| h.ends_with("_improvement_db")).collect();
        assert_eq!(improvements.len(), 7, "{header:?}");
        assert!(!header.iter().any(|h| h.starts_with(baseline) && h.ends_with("_improvement_db")));
    }
    assert!(eval.join("regional_a_f_c.csv").exists());
    assert!(eval.join("scatter_d_f_b.csv").exists());
    let fits: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("results/fit_results.json")).unwrap()).unwrap();
    let best = fits
        .as_array()
        .unwrap()
        .iter()
        .min_by(|a, b| a["rmse_db"].as_f64().unwrap().total_cmp(&b["rmse_db"].as_f64().unwrap()))
        .unwrap();
    assert_eq!(best["model"], "B");
}

#[test]
fn predictions_for_free_space_and_degenerate_receivers() {
    let p = Project::new();
    p.config(json!({"models": ["FSPL"]}));
    ok(p.run(&["foliage"]));
    p.write("rx.csv", "rx_id,easting_m,northing_m,altitude_m\nfar,100,5,110\nself,0,5,110\n");
    let out = ok(p.run(&["predict", "--rx", p.path("rx.csv").to_str().unwrap()]));
    assert_eq!(
        p.read("out/predictions.csv"),
        "rx_id,distance_m,FSPL_db\nfar,100.0000,101.3909\nself,NaN,NaN\n"
    );
    assert!(stderr(&out).contains("summary: 1 warning(s)"));

    p.write("rx.csv", "rx_id,easting_m,northing_m,altitude_m\n");
    ok(p.run(&["predict", "--rx", p.path("rx.csv").to_str().unwrap()]));
    assert_eq!(p.read("out/predictions.csv"), "rx_id,distance_m,FSPL_db\n");
}

#[test]
fn prediction_needs_fitted_parameters_for_fitted_models() {
    let p = Project::new();
    p.config(json!({"models": ["FSPL", "B"]}));
    ok(p.run(&["foliage"]));
    p.write("rx.csv", "rx_id,easting_m,northing_m,altitude_m\nfar,100,5,110\n");
    assert!(failed(p.run(&["predict", "--rx", p.path("rx.csv").to_str().unwrap()])).contains("fit_results.json"));
}

#[test]
fn a_held_lock_blocks_the_run() {
    let p = Project::new();
    std::fs::create_dir_all(p.path("out")).unwrap();
    p.write("out/.foliage.lock", "");
    assert!(failed(p.run(&["foliage"])).contains("in use by another run"));
    std::fs::remove_file(p.path("out/.foliage.lock")).unwrap();
    ok(p.run(&["foliage"]));
    assert!(!p.path("out/.foliage.lock").exists());
}

#[test]
fn output_flag_overrides_the_config() {
    let p = Project::new();
    let elsewhere = p.path("elsewhere");
    ok(p.run(&["--output", elsewhere.to_str().unwrap(), "foliage"]));
    assert!(elsewhere.join("foliage_mask.asc").exists());
    assert!(!p.path("out").exists());
}

#[test]
fn unreachable_tile_server_fails_the_command() {
    let p = Project::new();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let template = format!("http://127.0.0.1:{port}/{{z}}/{{x}}/{{y}}.asc");
    let err = failed(p.run(&[
        "fetch-dem",
        "--url-template",
        &template,
        "--bbox",
        "-0.5,-0.5,0.5,0.5",
        "--zoom",
        "1",
        "--retries",
        "0",
    ]));
    assert!(err.contains(&port.to_string()), "{err}");
}
