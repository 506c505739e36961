//! Radar point clouds, BEV ranges, synthetic scenes and the cloud file formats.
//!
//! Text format: first line `# c_raw=<k>`, then one `x,y,z,f0,...,f{k-1}` line
//! per point, every value written with 17 significant digits.
//!
//! Binary format: magic `RGPC`, u32 version (1), u32 N, u32 c_raw, then
//! `N·(3 + c_raw)` little-endian f64 in point order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Mat2x3, Vec3};
use crate::rng::Rng;

pub const DEFAULT_C_RAW: usize = 4;
const CLOUD_MAGIC: &[u8; 4] = b"RGPC";
const CLOUD_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RadarPoint {
    pub position: Vec3,
    pub raw_features: Vec<f64>,
}

/// Ordered radar points sharing one channel count. Order matters: it is the
/// tie-break key when splats are blended.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<RadarPoint>,
    c_raw: usize,
}

impl PointCloud {
    pub fn new(points: Vec<RadarPoint>, c_raw: usize) -> Result<Self> {
        if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.raw_features.len() != c_raw) {
            return Err(Error::ShapeMismatch(format!(
                "point {i} has {} raw features, cloud has c_raw={c_raw}",
                p.raw_features.len()
            )));
        }
        Ok(PointCloud { points, c_raw })
    }

    pub fn empty(c_raw: usize) -> Self {
        PointCloud {
            points: Vec::new(),
            c_raw,
        }
    }

    pub fn points(&self) -> &[RadarPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn c_raw(&self) -> usize {
        self.c_raw
    }

    pub fn position(&self, i: usize) -> &Vec3 {
        &self.points[i].position
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.points[i].raw_features
    }

    /// Reorders points so that new index `k` holds old point `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> PointCloud {
        PointCloud {
            points: perm.iter().map(|&i| self.points[i].clone()).collect(),
            c_raw: self.c_raw,
        }
    }
}

/// Metric extent of the BEV plane and its pixel resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BevRange {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Rows, along y.
    pub h: usize,
    /// Columns, along x.
    pub w: usize,
}

impl BevRange {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, h: usize, w: usize) -> Result<Self> {
        let r = BevRange {
            x_min,
            x_max,
            y_min,
            y_max,
            h,
            w,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::InvalidSpec(format!(
                "BEV range [{}, {}] x [{}, {}] is empty",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        if self.h == 0 || self.w == 0 {
            return Err(Error::InvalidSpec("BEV resolution must be at least 1x1".into()));
        }
        Ok(())
    }

    /// View-of-Delft annotated area at 0.16 m pixels.
    pub fn vod() -> Self {
        BevRange {
            x_min: 0.0,
            x_max: 51.2,
            y_min: -25.6,
            y_max: 25.6,
            h: 320,
            w: 320,
        }
    }

    /// TJ4DRadSet evaluation area at 0.16 m pixels: 432 cells along x, 496 along y.
    pub fn tj4d() -> Self {
        BevRange {
            x_min: 0.0,
            x_max: 69.12,
            y_min: -39.68,
            y_max: 39.68,
            h: 496,
            w: 432,
        }
    }

    /// Pixels per meter along x and y.
    pub fn scale(&self) -> (f64, f64) {
        (
            self.w as f64 / (self.x_max - self.x_min),
            self.h as f64 / (self.y_max - self.y_min),
        )
    }

    /// Parallel projection with scaling; x maps to columns, y to rows.
    pub fn projection(&self) -> Mat2x3 {
        let (sx, sy) = self.scale();
        Mat2x3([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    }

    /// Boundary points count as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// `(row, col)` of the pixel holding `(x, y)`; points on the max edge go to
    /// the last row/column.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.contains(x, y) {
            return None;
        }
        let (sx, sy) = self.scale();
        let col = (((x - self.x_min) * sx).floor() as usize).min(self.w - 1);
        let row = (((y - self.y_min) * sy).floor() as usize).min(self.h - 1);
        Some((row, col))
    }
}

/// Parameters of a synthetic clustered scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_points: usize,
    pub c_raw: usize,
    pub n_clusters: usize,
    /// Per-axis standard deviation of points around their cluster center, meters.
    pub cluster_sigma: f64,
    pub range: BevRange,
    pub z_min: f64,
    pub z_max: f64,
}

impl SceneSpec {
    pub fn new(seed: u64, n_points: usize) -> Self {
        SceneSpec {
            seed,
            n_points,
            c_raw: DEFAULT_C_RAW,
            n_clusters: 8,
            cluster_sigma: 1.5,
            range: BevRange::vod(),
            z_min: -3.0,
            z_max: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        if self.c_raw == 0 {
            return Err(Error::InvalidSpec("c_raw must be at least 1".into()));
        }
        if self.n_points > 0 && self.n_clusters == 0 {
            return Err(Error::InvalidSpec("n_clusters must be at least 1".into()));
        }
        if !(self.cluster_sigma >= 0.0) || !self.cluster_sigma.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "cluster_sigma {} must be finite and non-negative",
                self.cluster_sigma
            )));
        }
        if !(self.z_max >= self.z_min) || !self.z_min.is_finite() || !self.z_max.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "z range [{}, {}] is invalid",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }
}

/// Deterministic clustered scene.
///
/// Draw order from `Rng::seed_from_u64(seed)`: for each cluster, its center
/// `(x, y, z)` uniform in the range; then for each point `i` (cluster
/// `i mod n_clusters`) three normal offsets scaled by `cluster_sigma` for x, y,
/// z followed by `c_raw` features uniform in `[-1, 1)`. Coordinates are clamped
/// into the range after the offset is added.
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let r = &spec.range;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec3> = (0..spec.n_clusters.max(1))
        .map(|_| {
            [
                rng.uniform(r.x_min, r.x_max),
                rng.uniform(r.y_min, r.y_max),
                rng.uniform(spec.z_min, spec.z_max),
            ]
        })
        .collect();
    let points = (0..spec.n_points)
        .map(|i| {
            let c = &centers[i % centers.len()];
            let x = c[0] + spec.cluster_sigma * rng.normal();
            let y = c[1] + spec.cluster_sigma * rng.normal();
            let z = c[2] + spec.cluster_sigma * rng.normal();
            let raw_features = (0..spec.c_raw).map(|_| rng.uniform(-1.0, 1.0)).collect();
            RadarPoint {
                position: [
                    x.clamp(r.x_min, r.x_max),
                    y.clamp(r.y_min, r.y_max),
                    z.clamp(spec.z_min, spec.z_max),
                ],
                raw_features,
            }
        })
        .collect();
    PointCloud::new(points, spec.c_raw)
}

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let mut out = format!("# c_raw={}\n", cloud.c_raw);
    for p in &cloud.points {
        let fields: Vec<String> = p
            .position
            .iter()
            .chain(&p.raw_features)
            .map(|v| format!("{v:.16e}"))
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn cloud_from_csv(text: &str, origin: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(origin, "missing `# c_raw=<k>` header"))?;
    let c_raw: usize = header
        .trim()
        .strip_prefix("# c_raw=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::format(origin, format!("bad header line {header:?}")))?;
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::format(origin, format!("line {}: {e}", n + 2)))?;
        if values.len() != 3 + c_raw {
            return Err(Error::format(
                origin,
                format!("line {}: expected {} columns, found {}", n + 2, 3 + c_raw, values.len()),
            ));
        }
        points.push(RadarPoint {
            position: [values[0], values[1], values[2]],
            raw_features: values[3..].to_vec(),
        });
    }
    PointCloud::new(points, c_raw)
}

pub fn cloud_to_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + cloud.len() * (3 + cloud.c_raw) * 8);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&CLOUD_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    out.extend_from_slice(&(cloud.c_raw as u32).to_le_bytes());
    for p in &cloud.points {
        for v in p.position.iter().chain(&p.raw_features) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn cloud_from_bytes(bytes: &[u8], origin: &str) -> Result<PointCloud> {
    if bytes.len() < 16 || &bytes[..4] != CLOUD_MAGIC {
        return Err(Error::format(origin, "missing RGPC header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != CLOUD_VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    let n = word(8) as usize;
    let c_raw = word(12) as usize;
    let stride = 3 + c_raw;
    let expected = n
        .checked_mul(stride)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(Error::format(
            origin,
            format!(
                "payload is {} bytes, header implies {n} points of {stride} values",
                bytes.len() - 16
            ),
        ));
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let points = values
        .chunks_exact(stride)
        .map(|v| RadarPoint {
            position: [v[0], v[1], v[2]],
            raw_features: v[3..].to_vec(),
        })
        .collect();
    PointCloud::new(points, c_raw)
}

/// Reads either format, detected from the leading magic bytes.
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    if bytes.starts_with(CLOUD_MAGIC) {
        return cloud_from_bytes(&bytes, &origin);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::format(&origin, "not UTF-8"))?;
    cloud_from_csv(&text, &origin)
}

/// Writes the binary format for `.rgpc` paths and CSV otherwise.
pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().is_some_and(|e| e == "rgpc") {
        cloud_to_bytes(cloud)
    } else {
        cloud_to_csv(cloud).into_bytes()
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}
