//! Georeferenced rasters, the ASCII grid format, and foliage-mask extraction.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Maximum origin / cell-size discrepancy, in meters, for two grids to count as aligned.
pub const ALIGNMENT_TOLERANCE_M: f64 = 1e-6;

/// Sentinel written into the header of generated binary masks. Masks never contain it.
pub const MASK_NODATA: f64 = -9999.0;

/// A north-up raster of square cells.
///
/// Values are stored row-major with row 0 the northernmost row, the same
/// order the ASCII grid format lists them in. `(x_origin, y_origin)` is the
/// lower-left (south-west) corner of the grid.
#[derive(Debug, Clone)]
pub struct RasterGrid<T> {
    x_origin: T,
    y_origin: T,
    cell_size: T,
    n_cols: usize,
    n_rows: usize,
    nodata: T,
    values: Vec<T>,
}

fn same_value<T: Scalar>(a: T, b: T) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl<T: Scalar> PartialEq for RasterGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.n_cols == other.n_cols
            && self.n_rows == other.n_rows
            && self.x_origin == other.x_origin
            && self.y_origin == other.y_origin
            && self.cell_size == other.cell_size
            && same_value(self.nodata, other.nodata)
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| same_value(a, b))
    }
}

impl<T: Scalar> RasterGrid<T> {
    pub fn new(
        x_origin: T,
        y_origin: T,
        cell_size: T,
        n_cols: usize,
        n_rows: usize,
        nodata: T,
        values: Vec<T>,
    ) -> Result<Self> {
        if n_cols == 0 || n_rows == 0 {
            return Err(Error::InvalidGrid(format!(
                "grid must have at least one row and column, got {n_cols}x{n_rows}"
            )));
        }
        if !(cell_size.is_finite() && cell_size > T::zero()) {
            return Err(Error::InvalidGrid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if !(x_origin.is_finite() && y_origin.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if values.len() != n_cols * n_rows {
            return Err(Error::InvalidGrid(format!(
                "expected {} values for {n_cols}x{n_rows}, got {}",
                n_cols * n_rows,
                values.len()
            )));
        }
        Ok(Self {
            x_origin,
            y_origin,
            cell_size,
            n_cols,
            n_rows,
            nodata,
            values,
        })
    }

    /// Grid with every cell set to `fill`.
    pub fn filled(
        x_origin: T,
        y_origin: T,
        cell_size: T,
        n_cols: usize,
        n_rows: usize,
        nodata: T,
        fill: T,
    ) -> Result<Self> {
        Self::new(
            x_origin,
            y_origin,
            cell_size,
            n_cols,
            n_rows,
            nodata,
            vec![fill; n_cols * n_rows],
        )
    }

    /// Same geometry and nodata sentinel, new cell values.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(
            self.x_origin,
            self.y_origin,
            self.cell_size,
            self.n_cols,
            self.n_rows,
            self.nodata,
            values,
        )
    }

    pub fn x_origin(&self) -> T {
        self.x_origin
    }

    pub fn y_origin(&self) -> T {
        self.y_origin
    }

    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn nodata(&self) -> T {
        self.nodata
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x_max(&self) -> T {
        self.x_origin + self.cell_size * T::from_count(self.n_cols)
    }

    pub fn y_max(&self) -> T {
        self.y_origin + self.cell_size * T::from_count(self.n_rows)
    }

    pub fn is_nodata(&self, v: T) -> bool {
        same_value(v, self.nodata)
    }

    /// Raw stored value, nodata included.
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.n_cols + col]
    }

    /// Cell value, `None` for nodata.
    pub fn value(&self, row: usize, col: usize) -> Option<T> {
        let v = self.get(row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    /// Center of cell `(row, col)` in map coordinates.
    pub fn cell_center(&self, row: usize, col: usize) -> (T, T) {
        let half = T::lit(0.5);
        let x = self.x_origin + (T::from_count(col) + half) * self.cell_size;
        let y = self.y_origin + (T::from_count(self.n_rows - row) - half) * self.cell_size;
        (x, y)
    }

    /// `(row, col)` of the cell containing the point. Cells are closed on their
    /// west/south edges and open on their east/north edges.
    pub fn locate(&self, x: T, y: T) -> Option<(usize, usize)> {
        let fx = ((x - self.x_origin) / self.cell_size).floor();
        let fy = ((y - self.y_origin) / self.cell_size).floor();
        if !(fx.is_finite() && fy.is_finite()) || fx < T::zero() || fy < T::zero() {
            return None;
        }
        let col = fx.to_usize()?;
        let from_bottom = fy.to_usize()?;
        if col >= self.n_cols || from_bottom >= self.n_rows {
            return None;
        }
        Some((self.n_rows - 1 - from_bottom, col))
    }

    /// Value of the cell containing the point; `None` outside the grid or on nodata.
    pub fn sample(&self, x: T, y: T) -> Option<T> {
        let (row, col) = self.locate(x, y)?;
        self.value(row, col)
    }

    /// True when every non-nodata cell is 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.values
            .iter()
            .all(|&v| self.is_nodata(v) || v == T::zero() || v == T::one())
    }

    pub fn count_where(&self, pred: impl Fn(T) -> bool) -> usize {
        self.values
            .iter()
            .filter(|&&v| !self.is_nodata(v) && pred(v))
            .count()
    }

    pub fn nodata_count(&self) -> usize {
        self.values.iter().filter(|&&v| self.is_nodata(v)).count()
    }

    /// Shifts the grid origin, leaving cell values untouched.
    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self {
            x_origin: self.x_origin + dx,
            y_origin: self.y_origin + dy,
            ..self.clone()
        }
    }
}

const HEADER_KEYS: [&str; 6] = [
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "cellsize",
    "NODATA_value",
];

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses an ASCII grid document: six header lines followed by `nrows` rows
/// of `ncols` whitespace-separated values, northernmost row first.
pub fn parse_ascii_grid<T: Scalar>(text: &str) -> Result<RasterGrid<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut header = [""; 6];
    let mut last_line = 0;
    for (slot, key) in header.iter_mut().zip(HEADER_KEYS) {
        let Some((no, line)) = lines.next() else {
            return Err(parse_err(last_line + 1, format!("missing `{key}` header line")));
        };
        last_line = no;
        let mut parts = line.split_whitespace();
        let found = parts.next().unwrap_or_default();
        if !found.eq_ignore_ascii_case(key) {
            return Err(parse_err(no, format!("expected header keyword `{key}`, found `{found}`")));
        }
        let (Some(value), None) = (parts.next(), parts.next()) else {
            return Err(parse_err(no, format!("header `{key}` must carry exactly one value")));
        };
        *slot = value;
    }

    let count = |i: usize| -> Result<usize> {
        header[i]
            .parse::<usize>()
            .map_err(|_| parse_err(i + 1, format!("`{}` is not a nonnegative integer", header[i])))
    };
    let float = |i: usize| -> Result<T> {
        header[i]
            .parse::<T>()
            .map_err(|_| parse_err(i + 1, format!("`{}` is not a number", header[i])))
    };
    let n_cols = count(0)?;
    let n_rows = count(1)?;
    let (x_origin, y_origin, cell_size, nodata) = (float(2)?, float(3)?, float(4)?, float(5)?);

    let mut values = Vec::with_capacity(n_cols.saturating_mul(n_rows));
    let mut rows_seen = 0;
    for (no, line) in lines {
        if rows_seen == n_rows {
            return Err(parse_err(no, format!("more than the declared {n_rows} rows")));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<T>()
                .map_err(|_| parse_err(no, format!("non-numeric cell value `{tok}`")))?;
            values.push(v);
        }
        let found = values.len() - before;
        if found != n_cols {
            return Err(parse_err(no, format!("row has {found} values, expected {n_cols}")));
        }
        rows_seen += 1;
        last_line = no;
    }
    if rows_seen != n_rows {
        return Err(parse_err(
            last_line + 1,
            format!("found {rows_seen} rows, expected {n_rows}"),
        ));
    }

    RasterGrid::new(x_origin, y_origin, cell_size, n_cols, n_rows, nodata, values)
}

/// Serializes a grid in the ASCII grid format. Values use the shortest
/// decimal form that parses back to the same number.
pub fn write_ascii_grid<T: Scalar>(grid: &RasterGrid<T>) -> String {
    let mut out = String::with_capacity(64 + grid.len() * 4);
    let header: [(&str, String); 6] = [
        (HEADER_KEYS[0], grid.n_cols.to_string()),
        (HEADER_KEYS[1], grid.n_rows.to_string()),
        (HEADER_KEYS[2], grid.x_origin.to_string()),
        (HEADER_KEYS[3], grid.y_origin.to_string()),
        (HEADER_KEYS[4], grid.cell_size.to_string()),
        (HEADER_KEYS[5], grid.nodata.to_string()),
    ];
    for (key, value) in header {
        let _ = writeln!(out, "{key} {value}");
    }
    for row in grid.values.chunks(grid.n_cols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// True iff both grids share origin, cell size and shape.
pub fn check_alignment<T: Scalar>(a: &RasterGrid<T>, b: &RasterGrid<T>) -> bool {
    let tol = T::lit(ALIGNMENT_TOLERANCE_M);
    a.n_cols == b.n_cols
        && a.n_rows == b.n_rows
        && (a.x_origin - b.x_origin).abs() <= tol
        && (a.y_origin - b.y_origin).abs() <= tol
        && (a.cell_size - b.cell_size).abs() <= tol
}

/// Resamples `src` onto the geometry of `template` by nearest neighbor.
///
/// Each template cell takes the value of the source cell containing its
/// center. Cells whose center falls outside `src` get the source nodata value.
pub fn resample_nearest<T: Scalar>(
    src: &RasterGrid<T>,
    template: &RasterGrid<T>,
) -> Result<RasterGrid<T>> {
    let overlap_x = src.x_max().min(template.x_max()) - src.x_origin.max(template.x_origin);
    let overlap_y = src.y_max().min(template.y_max()) - src.y_origin.max(template.y_origin);
    if overlap_x <= T::zero() || overlap_y <= T::zero() {
        return Err(Error::NoOverlap);
    }
    let mut values = Vec::with_capacity(template.len());
    for row in 0..template.n_rows {
        for col in 0..template.n_cols {
            let (x, y) = template.cell_center(row, col);
            values.push(
                src.locate(x, y)
                    .map_or(src.nodata, |(r, c)| src.get(r, c)),
            );
        }
    }
    RasterGrid::new(
        template.x_origin,
        template.y_origin,
        template.cell_size,
        template.n_cols,
        template.n_rows,
        src.nodata,
        values,
    )
}

/// Binary foliage mask plus the cell tallies gathered while building it.
#[derive(Debug, Clone)]
pub struct FoliageMask<T> {
    pub grid: RasterGrid<T>,
    pub foliage_cells: usize,
    /// Cells where either input was nodata; these are stored as 0.
    pub nodata_cells: usize,
}

/// Marks cells whose canopy height (`lidar - terrain`) strictly exceeds
/// `height_threshold`. Nodata in either input yields 0.
pub fn extract_foliage_mask<T: Scalar>(
    lidar: &RasterGrid<T>,
    terrain: &RasterGrid<T>,
    height_threshold: T,
) -> Result<FoliageMask<T>> {
    if !check_alignment(lidar, terrain) {
        return Err(Error::Misaligned);
    }
    if !(height_threshold.is_finite() && height_threshold > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "height threshold must be positive, got {height_threshold}"
        )));
    }
    let mut foliage_cells = 0;
    let mut nodata_cells = 0;
    let values = lidar
        .values
        .iter()
        .zip(&terrain.values)
        .map(|(&top, &ground)| {
            if lidar.is_nodata(top) || terrain.is_nodata(ground) {
                nodata_cells += 1;
                T::zero()
            } else if top - ground > height_threshold {
                foliage_cells += 1;
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    if nodata_cells > 0 {
        log::warn!(
            "{nodata_cells} of {} cells lack lidar or terrain data; treated as non-foliage",
            lidar.len()
        );
    }
    let grid = RasterGrid::new(
        lidar.x_origin,
        lidar.y_origin,
        lidar.cell_size,
        lidar.n_cols,
        lidar.n_rows,
        T::lit(MASK_NODATA),
        values,
    )?;
    Ok(FoliageMask {
        grid,
        foliage_cells,
        nodata_cells,
    })
}
