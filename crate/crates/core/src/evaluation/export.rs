//! Plot-ready CSV series: scatter, regional RMSE and regional comparison.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::Observation;
use crate::geodata::{csv_reader, row_of, Columns};
use crate::models::{predict, ModelOptions, ModelParams};
use crate::num::Scalar;

use super::{ComparisonRow, EvalReport, FeatureAxis, ModelWindow, RegionalComparison, RegionalWindow};

pub const SCATTER_HEADER: [&str; 4] = ["axis_value", "measured_db", "predicted_db", "residual_db"];
pub const REGIONAL_HEADER: [&str; 4] = ["window_start", "window_end", "sample_count", "rmse_db"];

fn fixed<T: Scalar>(v: T) -> String {
    format!("{:.4}", v.as_f64())
}

fn optional<T: Scalar>(v: Option<T>) -> String {
    v.map(fixed).unwrap_or_default()
}

fn flush<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?
        .flush()
        .map_err(|e| Error::io("<csv>", e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint<T> {
    pub axis_value: T,
    pub measured_db: T,
    pub predicted_db: T,
    pub residual_db: T,
}

/// Feature value, measurement and prediction for every record.
pub fn scatter_points<T: Scalar>(
    dataset: &[Observation<T>],
    params: &ModelParams<T>,
    f_ghz: T,
    options: &ModelOptions,
    axis: FeatureAxis,
) -> Result<Vec<ScatterPoint<T>>> {
    dataset
        .iter()
        .map(|o| {
            let predicted_db = predict(&o.features, params, f_ghz, options)?.total_db;
            Ok(ScatterPoint {
                axis_value: axis.value(&o.features),
                measured_db: o.measured_db,
                predicted_db,
                residual_db: predicted_db - o.measured_db,
            })
        })
        .collect()
}

pub fn write_scatter_csv<T: Scalar, W: Write>(points: &[ScatterPoint<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCATTER_HEADER)?;
    for p in points {
        w.write_record([
            fixed(p.axis_value),
            fixed(p.measured_db),
            fixed(p.predicted_db),
            fixed(p.residual_db),
        ])?;
    }
    flush(w)
}

pub fn read_scatter_csv<T: Scalar, R: Read>(rdr: R) -> Result<Vec<ScatterPoint<T>>> {
    let mut rdr = csv_reader(rdr);
    let cols = Columns::resolve(rdr.headers()?, &SCATTER_HEADER)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = row_of(&record);
        let num = |i: usize| cols.number::<T>(&record, i, row, SCATTER_HEADER[i], true);
        out.push(ScatterPoint {
            axis_value: num(0)?,
            measured_db: num(1)?,
            predicted_db: num(2)?,
            residual_db: num(3)?,
        });
    }
    Ok(out)
}

pub fn write_regional_csv<T: Scalar, W: Write>(windows: &[RegionalWindow<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REGIONAL_HEADER)?;
    for win in windows {
        w.write_record([
            fixed(win.window_start),
            fixed(win.window_end),
            win.sample_count.to_string(),
            optional(win.rmse_db),
        ])?;
    }
    flush(w)
}

fn parse_optional<T: Scalar>(raw: &str, row: usize, name: &str) -> Result<Option<T>> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<T>().map(Some).map_err(|_| Error::Csv {
        row,
        message: format!("`{name}` value `{raw}` is not a number"),
    })
}

pub fn read_regional_csv<T: Scalar, R: Read>(rdr: R) -> Result<Vec<RegionalWindow<T>>> {
    let mut rdr = csv_reader(rdr);
    let cols = Columns::resolve(rdr.headers()?, &REGIONAL_HEADER)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = row_of(&record);
        let count_raw = cols.text(&record, 2, row)?;
        let sample_count = count_raw.parse::<usize>().map_err(|_| Error::Csv {
            row,
            message: format!("`sample_count` value `{count_raw}` is not a count"),
        })?;
        out.push(RegionalWindow {
            window_start: cols.number(&record, 0, row, REGIONAL_HEADER[0], true)?,
            window_end: cols.number(&record, 1, row, REGIONAL_HEADER[1], true)?,
            sample_count,
            rmse_db: parse_optional(cols.text(&record, 3, row)?, row, REGIONAL_HEADER[3])?,
            low_confidence: sample_count < super::MIN_CONFIDENT_SAMPLES,
        });
    }
    Ok(out)
}

fn comparison_header<T>(c: &RegionalComparison<T>) -> Vec<String> {
    let mut header = vec!["window_center".to_owned(), "baseline_rmse_db".to_owned()];
    for name in &c.model_names {
        header.push(format!("{name}_rmse_db"));
        header.push(format!("{name}_improvement_db"));
    }
    header
}

pub fn write_comparison_csv<T: Scalar, W: Write>(c: &RegionalComparison<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(comparison_header(c))?;
    let half = T::lit(0.5);
    for row in &c.rows {
        let mut fields = vec![
            fixed((row.window_start + row.window_end) * half),
            optional(row.baseline_rmse_db),
        ];
        for m in &row.models {
            fields.push(optional(m.rmse_db));
            fields.push(optional(m.improvement_db));
        }
        w.write_record(&fields)?;
    }
    flush(w)
}

/// Reads a comparison CSV. The axis, window width and baseline name are not
/// stored in the file and must be supplied.
pub fn read_comparison_csv<T: Scalar, R: Read>(
    rdr: R,
    axis: FeatureAxis,
    window_width: T,
    baseline_model: &str,
) -> Result<RegionalComparison<T>> {
    let mut rdr = csv_reader(rdr);
    let headers = rdr.headers()?.clone();
    let fields: Vec<&str> = headers.iter().collect();
    if fields.len() < 2 || fields[0] != "window_center" || fields[1] != "baseline_rmse_db" || !fields.len().is_multiple_of(2) {
        return Err(Error::Csv {
            row: 1,
            message: "expected window_center,baseline_rmse_db followed by model column pairs".into(),
        });
    }
    let mut model_names = Vec::new();
    for pair in fields[2..].chunks(2) {
        let name = pair[0].strip_suffix("_rmse_db");
        match name {
            Some(n) if pair[1] == format!("{n}_improvement_db") => model_names.push(n.to_owned()),
            _ => {
                return Err(Error::Csv {
                    row: 1,
                    message: format!("malformed model columns `{}`,`{}`", pair[0], pair[1]),
                })
            }
        }
    }
    let half_width = window_width * T::lit(0.5);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = row_of(&record);
        let cell = |i: usize| record.get(i).unwrap_or_default();
        let center: T = cell(0).parse().map_err(|_| Error::Csv {
            row,
            message: format!("`window_center` value `{}` is not a number", cell(0)),
        })?;
        let models = (0..model_names.len())
            .map(|m| {
                Ok(ModelWindow {
                    rmse_db: parse_optional(cell(2 + 2 * m), row, fields[2 + 2 * m])?,
                    improvement_db: parse_optional(cell(3 + 2 * m), row, fields[3 + 2 * m])?,
                })
            })
            .collect::<Result<_>>()?;
        rows.push(ComparisonRow {
            window_start: center - half_width,
            window_end: center + half_width,
            baseline_rmse_db: parse_optional(cell(1), row, fields[1])?,
            models,
        });
    }
    Ok(RegionalComparison {
        axis,
        window_width,
        baseline_model: baseline_model.to_owned(),
        model_names,
        rows,
    })
}

/// A series to export.
pub enum PlotData<'a, T> {
    Scatter(&'a [ScatterPoint<T>]),
    Regional(&'a EvalReport<T>),
    Comparison(&'a RegionalComparison<T>),
}

/// Writes one plot series to `destination` as CSV.
pub fn export_plot_data<T: Scalar>(data: PlotData<'_, T>, destination: &Path) -> Result<()> {
    let file = std::fs::File::create(destination).map_err(|e| Error::io(destination, e))?;
    let out = std::io::BufWriter::new(file);
    match data {
        PlotData::Scatter(points) => write_scatter_csv(points, out),
        PlotData::Regional(report) => write_regional_csv(&report.regional, out),
        PlotData::Comparison(c) => write_comparison_csv(c, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(start: f64, n: usize, rmse: Option<f64>) -> RegionalWindow<f64> {
        RegionalWindow {
            window_start: start,
            window_end: start + 10.0,
            sample_count: n,
            rmse_db: rmse,
            low_confidence: n < 3,
        }
    }

    fn text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn regional_csv_shapes() {
        assert_eq!(
            text(|b| write_regional_csv::<f64, _>(&[], b)),
            "window_start,window_end,sample_count,rmse_db\n"
        );
        let one = text(|b| write_regional_csv(&[window(0.0, 4, Some(2.5))], b));
        assert_eq!(one.lines().count(), 2);
        assert_eq!(one.lines().nth(1), Some("0.0000,10.0000,4,2.5000"));
        let empty = text(|b| write_regional_csv(&[window(10.0, 0, None)], b));
        assert_eq!(empty.lines().nth(1), Some("10.0000,20.0000,0,"));
        let back: Vec<RegionalWindow<f64>> = read_regional_csv(empty.as_bytes()).unwrap();
        assert_eq!(back, [window(10.0, 0, None)]);
    }

    #[test]
    fn comparison_csv_columns() {
        let c = RegionalComparison {
            axis: FeatureAxis::WoodlandDepth,
            window_width: 10.0,
            baseline_model: "ITU".into(),
            model_names: vec!["A1".into(), "B".into()],
            rows: vec![ComparisonRow {
                window_start: 0.0,
                window_end: 10.0,
                baseline_rmse_db: Some(5.0),
                models: vec![
                    ModelWindow { rmse_db: Some(3.0), improvement_db: Some(2.0) },
                    ModelWindow { rmse_db: None, improvement_db: None },
                ],
            }],
        };
        let t = text(|b| write_comparison_csv(&c, b));
        assert_eq!(
            t,
            "window_center,baseline_rmse_db,A1_rmse_db,A1_improvement_db,B_rmse_db,B_improvement_db\n5.0000,5.0000,3.0000,2.0000,,\n"
        );
        let back = read_comparison_csv(t.as_bytes(), FeatureAxis::WoodlandDepth, 10.0, "ITU").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn scatter_round_trip_preserves_rmse() {
        let pts: Vec<ScatterPoint<f64>> = (0..20)
            .map(|i| {
                let m = 100.0 + i as f64 * 1.37;
                let p = 101.0 + (i as f64).sin() * 3.0;
                ScatterPoint { axis_value: i as f64 * 2.5, measured_db: m, predicted_db: p, residual_db: p - m }
            })
            .collect();
        let rmse = |ps: &[ScatterPoint<f64>]| {
            let (p, m): (Vec<f64>, Vec<f64>) = ps.iter().map(|s| (s.predicted_db, s.measured_db)).unzip();
            crate::fitting::rmse(&p, &m).unwrap()
        };
        let t = text(|b| write_scatter_csv(&pts, b));
        let back: Vec<ScatterPoint<f64>> = read_scatter_csv(t.as_bytes()).unwrap();
        assert!((rmse(&back) - rmse(&pts)).abs() < 1e-4);
        assert_eq!(text(|b| write_scatter_csv(&back, b)), t);
    }
}
