//! Raster, trunk and measurement ingestion plus foliage-mask extraction.

mod fetch;
mod raster;
mod records;

pub use fetch::{fetch_elevation_tiles, tile_index, tile_requests, BoundingBox, FetchOptions, TileRequest};
pub use raster::{
    check_alignment, extract_foliage_mask, parse_ascii_grid, resample_nearest, write_ascii_grid,
    FoliageMask, RasterGrid, ALIGNMENT_TOLERANCE_M, MASK_NODATA,
};
pub use records::{
    read_measurements, read_trunks, write_measurements, write_trunks, MeasurementRecord,
    SiteGeometry, Trunk, TrunkSet, DEFAULT_WOODLAND_EDGE_OFFSET_M, MEASUREMENTS_HEADER,
    TRUNKS_HEADER,
};
pub(crate) use records::{csv_reader, row_of, Columns};

/// Default canopy-height threshold separating tree canopy from shrubs and ground returns.
pub const DEFAULT_HEIGHT_THRESHOLD_M: f64 = 2.0;
