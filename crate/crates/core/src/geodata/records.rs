//! Trunk inventories, measurement logs and the site description.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::point::Point3;

pub const TRUNKS_HEADER: [&str; 2] = ["easting_m", "northing_m"];
pub const MEASUREMENTS_HEADER: [&str; 5] = [
    "track_id",
    "easting_m",
    "northing_m",
    "altitude_m",
    "path_loss_db",
];

/// TX-to-forest-edge distance used when none is configured.
pub const DEFAULT_WOODLAND_EDGE_OFFSET_M: f64 = 15.0;

/// Tree trunk modeled as a vertical line through `(easting, northing)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trunk<T> {
    pub easting: T,
    pub northing: T,
}

/// Trunk inventory. Duplicates are allowed: clustered stems may share a label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrunkSet<T> {
    trunks: Vec<Trunk<T>>,
}

impl<T: Scalar> TrunkSet<T> {
    pub fn new(trunks: Vec<Trunk<T>>) -> Result<Self> {
        if let Some(i) = trunks
            .iter()
            .position(|t| !(t.easting.is_finite() && t.northing.is_finite()))
        {
            return Err(Error::InvalidArgument(format!("trunk {i} has a non-finite coordinate")));
        }
        Ok(Self { trunks })
    }

    pub fn empty() -> Self {
        Self { trunks: Vec::new() }
    }

    pub fn trunks(&self) -> &[Trunk<T>] {
        &self.trunks
    }

    pub fn len(&self) -> usize {
        self.trunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trunks.is_empty()
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            trunks: self
                .trunks
                .iter()
                .map(|t| Trunk {
                    easting: t.easting + dx,
                    northing: t.northing + dy,
                })
                .collect(),
        }
    }
}

/// One receiver location with its measured basic transmission loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord<T> {
    pub track_id: String,
    pub position: Point3<T>,
    pub path_loss_db: T,
}

impl<T: Scalar> MeasurementRecord<T> {
    pub fn new(track_id: impl Into<String>, position: Point3<T>, path_loss_db: T) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::InvalidArgument("measurement position must be finite".into()));
        }
        if !(path_loss_db.is_finite() && path_loss_db > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "path loss must be finite and positive, got {path_loss_db}"
            )));
        }
        Ok(Self {
            track_id: track_id.into(),
            position,
            path_loss_db,
        })
    }
}

/// Transmitter placement and carrier for a measurement site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteGeometry<T> {
    pub tx_position: Point3<T>,
    pub carrier_frequency_ghz: T,
    pub woodland_edge_offset_m: T,
}

impl<T: Scalar> SiteGeometry<T> {
    pub fn new(tx_position: Point3<T>, carrier_frequency_ghz: T, woodland_edge_offset_m: T) -> Result<Self> {
        if !tx_position.is_finite() {
            return Err(Error::InvalidArgument("TX position must be finite".into()));
        }
        if !(carrier_frequency_ghz.is_finite() && carrier_frequency_ghz > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "carrier frequency must be positive, got {carrier_frequency_ghz} GHz"
            )));
        }
        if !(woodland_edge_offset_m.is_finite() && woodland_edge_offset_m >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "woodland edge offset must be nonnegative, got {woodland_edge_offset_m} m"
            )));
        }
        Ok(Self {
            tx_position,
            carrier_frequency_ghz,
            woodland_edge_offset_m,
        })
    }

    /// Site with the default 15 m TX-to-forest-edge offset.
    pub fn with_default_offset(tx_position: Point3<T>, carrier_frequency_ghz: T) -> Result<Self> {
        Self::new(
            tx_position,
            carrier_frequency_ghz,
            T::lit(DEFAULT_WOODLAND_EDGE_OFFSET_M),
        )
    }
}

/// Column lookup for a CSV document whose header must contain `required`.
pub(crate) struct Columns {
    index: Vec<usize>,
}

impl Columns {
    pub(crate) fn resolve(headers: &csv::StringRecord, required: &[&str]) -> Result<Self> {
        let index = required
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h.trim() == *name)
                    .ok_or_else(|| Error::Csv {
                        row: 1,
                        message: format!("missing column `{name}`"),
                    })
            })
            .collect::<Result<_>>()?;
        Ok(Self { index })
    }

    pub(crate) fn text<'r>(&self, record: &'r csv::StringRecord, i: usize, row: usize) -> Result<&'r str> {
        record
            .get(self.index[i])
            .map(str::trim)
            .ok_or_else(|| Error::Csv {
                row,
                message: "too few fields".into(),
            })
    }

    /// Parses column `i` as a number; `finite` rejects NaN and infinities.
    pub(crate) fn number<T: Scalar>(
        &self,
        record: &csv::StringRecord,
        i: usize,
        row: usize,
        name: &str,
        finite: bool,
    ) -> Result<T> {
        let raw = self.text(record, i, row)?;
        let v = raw.parse::<T>().map_err(|_| Error::Csv {
            row,
            message: format!("`{name}` value `{raw}` is not a number"),
        })?;
        if finite && !v.is_finite() {
            return Err(Error::Csv {
                row,
                message: format!("`{name}` must be finite, got `{raw}`"),
            });
        }
        Ok(v)
    }
}

pub(crate) fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(rdr)
}

pub(crate) fn row_of(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

pub fn read_trunks<T: Scalar, R: Read>(rdr: R) -> Result<TrunkSet<T>> {
    let mut rdr = csv_reader(rdr);
    let cols = Columns::resolve(rdr.headers()?, &TRUNKS_HEADER)?;
    let mut trunks = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = row_of(&record);
        trunks.push(Trunk {
            easting: cols.number(&record, 0, row, TRUNKS_HEADER[0], true)?,
            northing: cols.number(&record, 1, row, TRUNKS_HEADER[1], true)?,
        });
    }
    TrunkSet::new(trunks)
}

pub fn write_trunks<T: Scalar, W: Write>(trunks: &TrunkSet<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRUNKS_HEADER)?;
    for t in trunks.trunks() {
        w.write_record([t.easting.to_string(), t.northing.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<trunks>", e))?;
    Ok(())
}

pub fn read_measurements<T: Scalar, R: Read>(rdr: R) -> Result<Vec<MeasurementRecord<T>>> {
    let mut rdr = csv_reader(rdr);
    let cols = Columns::resolve(rdr.headers()?, &MEASUREMENTS_HEADER)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = row_of(&record);
        let track_id = cols.text(&record, 0, row)?.to_owned();
        let position = Point3::new(
            cols.number(&record, 1, row, MEASUREMENTS_HEADER[1], true)?,
            cols.number(&record, 2, row, MEASUREMENTS_HEADER[2], true)?,
            cols.number(&record, 3, row, MEASUREMENTS_HEADER[3], true)?,
        );
        let path_loss_db = cols.number(&record, 4, row, MEASUREMENTS_HEADER[4], true)?;
        let rec = MeasurementRecord::new(track_id, position, path_loss_db).map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_measurements<T: Scalar, W: Write>(records: &[MeasurementRecord<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MEASUREMENTS_HEADER)?;
    for r in records {
        w.write_record([
            r.track_id.clone(),
            r.position.x.to_string(),
            r.position.y.to_string(),
            r.position.z.to_string(),
            r.path_loss_db.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<measurements>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_body_gives_empty_lists() {
        let t: TrunkSet<f64> = read_trunks("easting_m,northing_m\n".as_bytes()).unwrap();
        assert!(t.is_empty());
        let m: Vec<MeasurementRecord<f64>> =
            read_measurements("track_id,easting_m,northing_m,altitude_m,path_loss_db\n".as_bytes()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn one_row_each() {
        let t: TrunkSet<f64> = read_trunks("easting_m,northing_m\n10.5,20\n".as_bytes()).unwrap();
        assert_eq!(t.trunks(), &[Trunk { easting: 10.5, northing: 20.0 }]);
        let m: Vec<MeasurementRecord<f64>> = read_measurements(
            "track_id,easting_m,northing_m,altitude_m,path_loss_db\nT1,1,2,3,120.5\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].track_id, "T1");
        assert_eq!(m[0].position, Point3::new(1.0, 2.0, 3.0));
        assert_eq!(m[0].path_loss_db, 120.5);
    }

    #[test]
    fn nan_loss_is_rejected_at_its_row() {
        let doc = "track_id,easting_m,northing_m,altitude_m,path_loss_db\nA,1,2,3,100\nA,1,2,3,NaN\n";
        match read_measurements::<f64, _>(doc.as_bytes()) {
            Err(Error::Csv { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected row error, got {other:?}"),
        }
        let doc = "track_id,easting_m,northing_m,altitude_m,path_loss_db\nA,1,2,3,-4\n";
        assert!(matches!(read_measurements::<f64, _>(doc.as_bytes()), Err(Error::Csv { row: 2, .. })));
    }

    #[test]
    fn missing_column_is_reported() {
        let doc = "track_id,easting_m,northing_m,path_loss_db\nA,1,2,100\n";
        assert!(matches!(read_measurements::<f64, _>(doc.as_bytes()), Err(Error::Csv { row: 1, .. })));
        assert!(read_trunks::<f64, _>("easting_m\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn site_geometry_validation() {
        let tx = Point3::new(0.0, 0.0, 2.0);
        let site = SiteGeometry::with_default_offset(tx, 28.0).unwrap();
        assert_eq!(site.woodland_edge_offset_m, 15.0);
        assert!(SiteGeometry::new(tx, 0.0, 15.0).is_err());
        assert!(SiteGeometry::new(tx, 28.0, -1.0).is_err());
    }
}
