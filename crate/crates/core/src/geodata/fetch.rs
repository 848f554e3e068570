//! Elevation tile download against a user-supplied URL template.
//!
//! Templates either address slippy-map tiles through `{z}`, `{x}` and `{y}`,
//! or request a single extent through `{bbox}` (`west,south,east,north`) or the
//! individual `{west}`, `{south}`, `{east}`, `{north}` placeholders.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};

/// Geographic extent in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub west: f64,
    pub south: f64,
    pub east: f64,
    pub north: f64,
}

impl BoundingBox {
    pub fn new(west: f64, south: f64, east: f64, north: f64) -> Result<Self> {
        let finite = [west, south, east, north].iter().all(|v| v.is_finite());
        if !finite || west >= east || south >= north {
            return Err(Error::InvalidArgument(format!(
                "bounding box must satisfy west < east and south < north, got {west},{south},{east},{north}"
            )));
        }
        if south < -85.0511 || north > 85.0511 || west < -180.0 || east > 180.0 {
            return Err(Error::InvalidArgument("bounding box outside the tileable range".into()));
        }
        Ok(Self { west, south, east, north })
    }
}

impl std::str::FromStr for BoundingBox {
    type Err = Error;

    /// Parses `west,south,east,north`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::InvalidArgument(format!("bad bounding box `{s}`")))?;
        match parts[..] {
            [w, so, e, n] => Self::new(w, so, e, n),
            _ => Err(Error::InvalidArgument(format!(
                "bounding box needs four comma-separated values, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub zoom: u32,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub parallelism: usize,
    pub timeout: Duration,
    pub retry_delay: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            zoom: 14,
            retries: 3,
            parallelism: 4,
            timeout: Duration::from_secs(30),
            retry_delay: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileRequest {
    pub url: String,
    pub file_name: String,
}

/// Slippy-map tile column and row containing a lon/lat point.
pub fn tile_index(lon: f64, lat: f64, zoom: u32) -> (u32, u32) {
    let n = f64::from(1u32 << zoom);
    let max = (1u32 << zoom) - 1;
    let x = ((lon + 180.0) / 360.0 * n).floor();
    let lat_r = lat.to_radians();
    let y = ((1.0 - (lat_r.tan() + 1.0 / lat_r.cos()).ln() / std::f64::consts::PI) / 2.0 * n).floor();
    let clamp = |v: f64| (v.max(0.0) as u32).min(max);
    (clamp(x), clamp(y))
}

fn extension(template: &str) -> String {
    let path = template.split(['?', '#']).next().unwrap_or_default();
    let last = path.rsplit('/').next().unwrap_or_default();
    match last.rsplit_once('.') {
        Some((_, ext)) if !ext.is_empty() && !ext.contains(['{', '}']) => format!(".{ext}"),
        _ => ".bin".to_owned(),
    }
}

/// Expands the template into one request per tile (or a single bbox request).
pub fn tile_requests(template: &str, bbox: &BoundingBox, zoom: u32) -> Result<Vec<TileRequest>> {
    let ext = extension(template);
    let has_xyz = ["{x}", "{y}"].iter().all(|p| template.contains(p));
    let has_bbox = template.contains("{bbox}")
        || ["{west}", "{south}", "{east}", "{north}"]
            .iter()
            .all(|p| template.contains(p));
    if has_xyz {
        if zoom > 24 {
            return Err(Error::InvalidArgument(format!("zoom {zoom} is out of range")));
        }
        let (x0, y0) = tile_index(bbox.west, bbox.north, zoom);
        let (x1, y1) = tile_index(bbox.east, bbox.south, zoom);
        let mut out = Vec::new();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let url = template
                    .replace("{z}", &zoom.to_string())
                    .replace("{x}", &x.to_string())
                    .replace("{y}", &y.to_string());
                out.push(TileRequest {
                    url,
                    file_name: format!("{zoom}_{x}_{y}{ext}"),
                });
            }
        }
        Ok(out)
    } else if has_bbox {
        let BoundingBox { west, south, east, north } = *bbox;
        let url = template
            .replace("{bbox}", &format!("{west},{south},{east},{north}"))
            .replace("{west}", &west.to_string())
            .replace("{south}", &south.to_string())
            .replace("{east}", &east.to_string())
            .replace("{north}", &north.to_string());
        Ok(vec![TileRequest {
            url,
            file_name: format!("bbox_{west}_{south}_{east}_{north}{ext}"),
        }])
    } else {
        Err(Error::InvalidArgument(
            "URL template needs {x}/{y}/{z} or bbox placeholders".into(),
        ))
    }
}

fn download(agent: &ureq::Agent, url: &str, dest: &Path) -> std::result::Result<(), String> {
    let response = agent.get(url).call().map_err(|e| e.to_string())?;
    let mut body = Vec::new();
    response
        .into_reader()
        .read_to_end(&mut body)
        .map_err(|e| e.to_string())?;
    let partial = dest.with_extension("part");
    std::fs::write(&partial, &body).map_err(|e| e.to_string())?;
    std::fs::rename(&partial, dest).map_err(|e| e.to_string())
}

/// Downloads every tile covering `bbox` into `destination_dir`, storing each
/// response body verbatim. Files already present are skipped. Returns the
/// path of every tile in request order.
pub fn fetch_elevation_tiles(
    url_template: &str,
    bbox: &BoundingBox,
    destination_dir: &Path,
    options: &FetchOptions,
) -> Result<Vec<PathBuf>> {
    let requests = tile_requests(url_template, bbox, options.zoom)?;
    std::fs::create_dir_all(destination_dir).map_err(|e| Error::io(destination_dir, e))?;
    let paths: Vec<PathBuf> = requests
        .iter()
        .map(|r| destination_dir.join(&r.file_name))
        .collect();
    let pending: Vec<usize> = (0..requests.len()).filter(|&i| !paths[i].exists()).collect();
    if pending.is_empty() {
        return Ok(paths);
    }
    log::info!(
        "downloading {} of {} tiles ({} already present)",
        pending.len(),
        requests.len(),
        requests.len() - pending.len()
    );

    let agent = ureq::AgentBuilder::new().timeout(options.timeout).build();
    let next = AtomicUsize::new(0);
    let failed = Mutex::new(Vec::new());
    let workers = options.parallelism.clamp(1, pending.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = pending.get(k) else { break };
                let url = &requests[i].url;
                let mut attempt = 0;
                loop {
                    match download(&agent, url, &paths[i]) {
                        Ok(()) => break,
                        Err(e) if attempt < options.retries => {
                            attempt += 1;
                            log::warn!("{url}: {e}; retry {attempt}/{}", options.retries);
                            std::thread::sleep(options.retry_delay);
                        }
                        Err(e) => {
                            log::error!("{url}: {e}");
                            failed.lock().unwrap().push((i, url.clone()));
                            break;
                        }
                    }
                }
            });
        }
    });

    let mut failed = failed.into_inner().unwrap();
    if failed.is_empty() {
        Ok(paths)
    } else {
        failed.sort();
        Err(Error::Fetch {
            count: failed.len(),
            failed: failed.into_iter().map(|(_, u)| u).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_index_matches_reference_points() {
        assert_eq!(tile_index(0.0, 0.0, 1), (1, 1));
        assert_eq!(tile_index(-180.0, 85.0, 3), (0, 0));
        // Boulder, CO at zoom 10
        assert_eq!(tile_index(-105.27, 40.015, 10), (212, 387));
    }

    #[test]
    fn expands_xyz_and_bbox_templates() {
        let bbox = BoundingBox::new(-0.5, -0.5, 0.5, 0.5).unwrap();
        let reqs = tile_requests("http://h/{z}/{x}/{y}.png", &bbox, 1).unwrap();
        let names: Vec<_> = reqs.iter().map(|r| r.file_name.as_str()).collect();
        assert_eq!(names, ["1_0_0.png", "1_1_0.png", "1_0_1.png", "1_1_1.png"]);
        assert_eq!(reqs[3].url, "http://h/1/1/1.png");

        let reqs = tile_requests("http://h/dem?bbox={bbox}", &bbox, 1).unwrap();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].url, "http://h/dem?bbox=-0.5,-0.5,0.5,0.5");
        assert!(reqs[0].file_name.ends_with(".bin"));

        assert!(tile_requests("http://h/dem", &bbox, 1).is_err());
    }

    #[test]
    fn bbox_parsing() {
        let b: BoundingBox = "-105.3, 40.0, -105.2, 40.1".parse().unwrap();
        assert_eq!(b.north, 40.1);
        assert!("1,2,3".parse::<BoundingBox>().is_err());
        assert!("1,2,0,3".parse::<BoundingBox>().is_err());
    }
}
