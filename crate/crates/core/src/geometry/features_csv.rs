use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geodata::{csv_reader, row_of, Columns, MeasurementRecord};
use crate::num::Scalar;
use crate::point::Point3;

use super::SiteFeatures;

pub const FEATURES_HEADER: [&str; 10] = [
    "track_id",
    "easting_m",
    "northing_m",
    "altitude_m",
    "path_loss_db",
    "d_m",
    "dw_m",
    "df_m",
    "af_m2",
    "n_trunks",
];

/// One line of `features.csv`. `features` is `None` for receivers whose
/// features could not be computed; those rows carry `NaN` markers.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow<T> {
    pub record: MeasurementRecord<T>,
    pub features: Option<SiteFeatures<T>>,
}

fn fixed<T: Scalar>(v: T) -> String {
    format!("{:.4}", v.as_f64())
}

pub fn write_features<T: Scalar, W: Write>(rows: &[FeatureRow<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURES_HEADER)?;
    for row in rows {
        let r = &row.record;
        let mut fields = vec![
            r.track_id.clone(),
            fixed(r.position.x),
            fixed(r.position.y),
            fixed(r.position.z),
            fixed(r.path_loss_db),
        ];
        match &row.features {
            Some(f) => fields.extend([
                fixed(f.distance_3d),
                fixed(f.woodland_depth),
                fixed(f.foliage_depth),
                fixed(f.foliage_area),
                f.trunk_count.to_string(),
            ]),
            None => fields.extend(std::iter::repeat_n("NaN".to_owned(), 5)),
        }
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<features>", e))?;
    Ok(())
}

pub fn read_features<T: Scalar, R: Read>(rdr: R) -> Result<Vec<FeatureRow<T>>> {
    let mut rdr = csv_reader(rdr);
    let cols = Columns::resolve(rdr.headers()?, &FEATURES_HEADER)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = row_of(&record);
        let num = |i: usize, finite: bool| cols.number::<T>(&record, i, row, FEATURES_HEADER[i], finite);
        let position = Point3::new(num(1, true)?, num(2, true)?, num(3, true)?);
        let measured = MeasurementRecord::new(cols.text(&record, 0, row)?, position, num(4, true)?)
            .map_err(|e| Error::Csv {
                row,
                message: e.to_string(),
            })?;
        let values = [num(5, false)?, num(6, false)?, num(7, false)?, num(8, false)?];
        let n_raw = cols.text(&record, 9, row)?;
        let features = if values.iter().all(|v| v.is_finite()) {
            let trunk_count = n_raw.parse::<usize>().map_err(|_| Error::Csv {
                row,
                message: format!("`n_trunks` value `{n_raw}` is not a count"),
            })?;
            Some(SiteFeatures {
                distance_3d: values[0],
                woodland_depth: values[1],
                foliage_depth: values[2],
                foliage_area: values[3],
                trunk_count,
            })
        } else {
            None
        };
        out.push(FeatureRow {
            record: measured,
            features,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_four_decimals_and_error_markers() {
        let rec = MeasurementRecord::new("t", Point3::new(1.0, 2.0, 3.0), 110.123456).unwrap();
        let rows = vec![
            FeatureRow {
                record: rec.clone(),
                features: Some(SiteFeatures {
                    distance_3d: 100.0,
                    woodland_depth: 85.0,
                    foliage_depth: 1.0 / 3.0,
                    foliage_area: 0.0,
                    trunk_count: 2,
                }),
            },
            FeatureRow {
                record: rec,
                features: None,
            },
        ];
        let mut buf = Vec::new();
        write_features(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], FEATURES_HEADER.join(","));
        assert_eq!(lines[1], "t,1.0000,2.0000,3.0000,110.1235,100.0000,85.0000,0.3333,0.0000,2");
        assert_eq!(lines[2], "t,1.0000,2.0000,3.0000,110.1235,NaN,NaN,NaN,NaN,NaN");

        let back: Vec<FeatureRow<f64>> = read_features(text.as_bytes()).unwrap();
        assert_eq!(back[0].features.unwrap().trunk_count, 2);
        assert!(back[1].features.is_none());
    }
}
