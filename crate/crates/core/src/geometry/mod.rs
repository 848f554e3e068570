//! Per-receiver blockage features: path length, woodland depth, trunk count
//! in the first Fresnel zone, line-of-sight foliage depth and Fresnel
//! footprint foliage area.

mod features_csv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::{RasterGrid, SiteGeometry, TrunkSet};
use crate::num::{Scalar, SPEED_OF_LIGHT};
use crate::point::Point3;

pub use features_csv::{read_features, write_features, FeatureRow, FEATURES_HEADER};

/// Mask lookups per cell length along the ground track of the path.
pub const DEFAULT_SAMPLES_PER_CELL: usize = 4;

/// Blockage descriptors for one receiver location.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SiteFeatures<T> {
    /// 3D TX-RX distance `d`, meters.
    pub distance_3d: T,
    /// Path length inside the woodland `d_w`, meters.
    pub woodland_depth: T,
    /// Foliage depth along the line of sight `d_f`, meters.
    pub foliage_depth: T,
    /// Foliage area inside the first Fresnel footprint `a_f`, square meters.
    pub foliage_area: T,
    /// Trunks inside the first Fresnel zone `N`.
    pub trunk_count: usize,
}

impl<T: Scalar> SiteFeatures<T> {
    pub fn is_finite(&self) -> bool {
        self.distance_3d.is_finite()
            && self.woodland_depth.is_finite()
            && self.foliage_depth.is_finite()
            && self.foliage_area.is_finite()
    }
}

/// Wavelength in meters for a carrier in GHz.
pub fn wavelength<T: Scalar>(f_ghz: T) -> Result<T> {
    if !(f_ghz.is_finite() && f_ghz > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "carrier frequency must be positive, got {f_ghz} GHz"
        )));
    }
    Ok(T::lit(SPEED_OF_LIGHT) / (f_ghz * T::lit(1e9)))
}

#[inline]
fn radius_for<T: Scalar>(lambda: T, d1: T, d2: T) -> T {
    let d = d1 + d2;
    if d1 <= T::zero() || d2 <= T::zero() {
        return T::zero();
    }
    (lambda * d1 * d2 / d).sqrt()
}

/// First Fresnel zone radius at distances `d1` and `d2` from the two terminals.
pub fn fresnel_radius<T: Scalar>(d1: T, d2: T, f_ghz: T) -> Result<T> {
    if !(d1 >= T::zero() && d2 >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "station distances must be nonnegative, got {d1} and {d2}"
        )));
    }
    if d1 + d2 <= T::zero() {
        return Err(Error::ZeroLengthPath);
    }
    Ok(radius_for(wavelength(f_ghz)?, d1, d2))
}

pub fn distance_3d<T: Scalar>(tx: &Point3<T>, rx: &Point3<T>) -> T {
    tx.distance(rx)
}

/// Path length inside the woodland: `distance - edge_offset`, clipped at zero.
pub fn woodland_depth<T: Scalar>(distance: T, edge_offset: T) -> T {
    (distance - edge_offset).max(T::zero())
}

/// Horizontal projection of the TX-RX segment.
#[derive(Debug, Clone, Copy)]
struct GroundTrack<T> {
    ax: T,
    ay: T,
    dx: T,
    dy: T,
    len2: T,
}

impl<T: Scalar> GroundTrack<T> {
    fn new(tx: &Point3<T>, rx: &Point3<T>) -> Self {
        let (dx, dy) = (rx.x - tx.x, rx.y - tx.y);
        Self {
            ax: tx.x,
            ay: tx.y,
            dx,
            dy,
            len2: dx * dx + dy * dy,
        }
    }

    fn length(&self) -> T {
        self.len2.sqrt()
    }

    fn point_at(&self, u: T) -> (T, T) {
        (self.ax + u * self.dx, self.ay + u * self.dy)
    }

    /// Unclamped fraction along the track of the foot of the perpendicular,
    /// and the distance from the point to that foot.
    fn project(&self, x: T, y: T) -> (T, T) {
        let (px, py) = (x - self.ax, y - self.ay);
        let u = (px * self.dx + py * self.dy) / self.len2;
        let (fx, fy) = (u * self.dx - px, u * self.dy - py);
        (u, fx.hypot(fy))
    }
}

fn checked_distance<T: Scalar>(tx: &Point3<T>, rx: &Point3<T>) -> Result<T> {
    let d = distance_3d(tx, rx);
    if !(d > T::zero()) {
        return Err(Error::ZeroLengthPath);
    }
    Ok(d)
}

fn require_binary<T: Scalar>(mask: &RasterGrid<T>) -> Result<()> {
    if mask.is_binary() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("foliage mask must contain only 0 and 1".into()))
    }
}

/// Counts trunks whose vertical line passes strictly inside the first Fresnel
/// zone.
///
/// Each trunk is tested at the station of its closest approach to the ground
/// track: it counts iff that station lies strictly between the terminals and
/// the horizontal offset is strictly less than the Fresnel radius there. A
/// purely vertical link has no interior stations and counts nothing.
pub fn count_trunks_in_fresnel<T: Scalar>(
    tx: &Point3<T>,
    rx: &Point3<T>,
    trunks: &TrunkSet<T>,
    f_ghz: T,
) -> Result<usize> {
    let d = checked_distance(tx, rx)?;
    let lambda = wavelength(f_ghz)?;
    Ok(count_trunks_unchecked(tx, rx, d, trunks, lambda))
}

fn count_trunks_unchecked<T: Scalar>(
    tx: &Point3<T>,
    rx: &Point3<T>,
    d: T,
    trunks: &TrunkSet<T>,
    lambda: T,
) -> usize {
    let track = GroundTrack::new(tx, rx);
    if track.len2 <= T::zero() {
        return 0;
    }
    trunks
        .trunks()
        .iter()
        .filter(|t| {
            let (u, offset) = track.project(t.easting, t.northing);
            if !(u > T::zero() && u < T::one()) {
                return false;
            }
            let d1 = u * d;
            offset < radius_for(lambda, d1, d - d1)
        })
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PathSamples {
    total: usize,
    foliage: usize,
    outside: usize,
}

fn sample_path<T: Scalar>(
    tx: &Point3<T>,
    rx: &Point3<T>,
    mask: &RasterGrid<T>,
    samples_per_cell: usize,
) -> PathSamples {
    let track = GroundTrack::new(tx, rx);
    let spacing = mask.cell_size() / T::from_count(samples_per_cell);
    let n = (track.length() / spacing)
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let n_t = T::from_count(n);
    let half = T::lit(0.5);
    let mut counts = PathSamples {
        total: n,
        foliage: 0,
        outside: 0,
    };
    for k in 0..n {
        let (x, y) = track.point_at((T::from_count(k) + half) / n_t);
        match mask.locate(x, y) {
            None => counts.outside += 1,
            Some((row, col)) => {
                if mask.get(row, col) == T::one() {
                    counts.foliage += 1;
                }
            }
        }
    }
    counts
}

fn depth_from_samples<T: Scalar>(s: PathSamples, d: T) -> T {
    if s.outside > 0 {
        log::warn!(
            "{} of {} path samples fall outside the foliage mask; counted as non-foliage",
            s.outside,
            s.total
        );
    }
    T::from_count(s.foliage) / T::from_count(s.total) * d
}

/// Foliage depth along the line of sight.
///
/// The ground track of the path is sampled at cell-centered stations spaced
/// `cell_size / samples_per_cell` apart; the fraction of samples landing on
/// foliage scales the 3D path length. Samples off the grid count as
/// non-foliage.
pub fn foliage_depth<T: Scalar>(
    tx: &Point3<T>,
    rx: &Point3<T>,
    mask: &RasterGrid<T>,
    samples_per_cell: usize,
) -> Result<T> {
    let d = checked_distance(tx, rx)?;
    if samples_per_cell < 2 {
        return Err(Error::InvalidArgument(format!(
            "samples_per_cell must be at least 2, got {samples_per_cell}"
        )));
    }
    require_binary(mask)?;
    Ok(depth_from_samples(sample_path(tx, rx, mask, samples_per_cell), d))
}

/// Foliage area inside the ground footprint of the first Fresnel zone.
///
/// The footprint has its foci at the ground positions of TX and RX and a
/// lateral half-width equal to the Fresnel radius at each station. Mask cells
/// whose centers fall inside it and are foliage contribute one cell area each.
pub fn foliage_area<T: Scalar>(
    tx: &Point3<T>,
    rx: &Point3<T>,
    mask: &RasterGrid<T>,
    f_ghz: T,
) -> Result<T> {
    let d = checked_distance(tx, rx)?;
    let lambda = wavelength(f_ghz)?;
    require_binary(mask)?;
    Ok(foliage_area_unchecked(tx, rx, d, mask, lambda, |v| v == T::one()))
}

/// Area of the footprint itself, rasterized on the mask grid (cells outside the grid excluded).
pub fn footprint_area<T: Scalar>(
    tx: &Point3<T>,
    rx: &Point3<T>,
    grid: &RasterGrid<T>,
    f_ghz: T,
) -> Result<T> {
    let d = checked_distance(tx, rx)?;
    let lambda = wavelength(f_ghz)?;
    Ok(foliage_area_unchecked(tx, rx, d, grid, lambda, |_| true))
}

fn foliage_area_unchecked<T: Scalar>(
    tx: &Point3<T>,
    rx: &Point3<T>,
    d: T,
    mask: &RasterGrid<T>,
    lambda: T,
    is_foliage: impl Fn(T) -> bool,
) -> T {
    let track = GroundTrack::new(tx, rx);
    if track.len2 <= T::zero() {
        return T::zero();
    }
    let half = T::lit(0.5);
    let reach = radius_for(lambda, d * half, d * half);
    let cs = mask.cell_size();
    let (x_lo, x_hi) = (tx.x.min(rx.x) - reach, tx.x.max(rx.x) + reach);
    let (y_lo, y_hi) = (tx.y.min(rx.y) - reach, tx.y.max(rx.y) + reach);

    // Candidate column/row window, clipped to the grid.
    let col_range = |lo: T, hi: T, origin: T, n: usize| -> Option<(usize, usize)> {
        let a = ((lo - origin) / cs).floor().max(T::zero());
        let b = ((hi - origin) / cs).floor();
        if b < T::zero() {
            return None;
        }
        let a = a.to_usize()?;
        let b = b.to_usize()?.min(n - 1);
        (a <= b).then_some((a, b))
    };
    let Some((c0, c1)) = col_range(x_lo, x_hi, mask.x_origin(), mask.n_cols()) else {
        return T::zero();
    };
    let Some((b0, b1)) = col_range(y_lo, y_hi, mask.y_origin(), mask.n_rows()) else {
        return T::zero();
    };

    let mut cells = 0usize;
    for from_bottom in b0..=b1 {
        let row = mask.n_rows() - 1 - from_bottom;
        for col in c0..=c1 {
            if !is_foliage(mask.get(row, col)) {
                continue;
            }
            let (x, y) = mask.cell_center(row, col);
            let (u, offset) = track.project(x, y);
            if u > T::zero() && u < T::one() {
                let d1 = u * d;
                if offset < radius_for(lambda, d1, d - d1) {
                    cells += 1;
                }
            }
        }
    }
    T::from_count(cells) * cs * cs
}

/// Reusable feature computation for many receivers sharing one site, mask and
/// trunk inventory. The mask is validated once at construction.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<'a, T> {
    site: SiteGeometry<T>,
    mask: &'a RasterGrid<T>,
    trunks: &'a TrunkSet<T>,
    samples_per_cell: usize,
    lambda: T,
}

impl<'a, T: Scalar> FeatureExtractor<'a, T> {
    pub fn new(
        site: SiteGeometry<T>,
        mask: &'a RasterGrid<T>,
        trunks: &'a TrunkSet<T>,
        samples_per_cell: usize,
    ) -> Result<Self> {
        if samples_per_cell < 2 {
            return Err(Error::InvalidArgument(format!(
                "samples_per_cell must be at least 2, got {samples_per_cell}"
            )));
        }
        require_binary(mask)?;
        let lambda = wavelength(site.carrier_frequency_ghz)?;
        Ok(Self {
            site,
            mask,
            trunks,
            samples_per_cell,
            lambda,
        })
    }

    pub fn site(&self) -> &SiteGeometry<T> {
        &self.site
    }

    pub fn compute(&self, rx: &Point3<T>) -> Result<SiteFeatures<T>> {
        if !rx.is_finite() {
            return Err(Error::InvalidArgument("receiver position must be finite".into()));
        }
        let tx = &self.site.tx_position;
        let d = checked_distance(tx, rx)?;
        let samples = sample_path(tx, rx, self.mask, self.samples_per_cell);
        Ok(SiteFeatures {
            distance_3d: d,
            woodland_depth: woodland_depth(d, self.site.woodland_edge_offset_m),
            foliage_depth: depth_from_samples(samples, d),
            foliage_area: foliage_area_unchecked(tx, rx, d, self.mask, self.lambda, |v| v == T::one()),
            trunk_count: count_trunks_unchecked(tx, rx, d, self.trunks, self.lambda),
        })
    }
}

/// All five blockage features for one receiver.
pub fn compute_features<T: Scalar>(
    site: &SiteGeometry<T>,
    rx: &Point3<T>,
    mask: &RasterGrid<T>,
    trunks: &TrunkSet<T>,
    samples_per_cell: usize,
) -> Result<SiteFeatures<T>> {
    FeatureExtractor::new(*site, mask, trunks, samples_per_cell)?.compute(rx)
}
