//! BEV Gaussian splatting.
//!
//! Gaussians are projected orthographically onto the ground plane and
//! alpha-blended per pixel in a fixed global order:
//!
//! ```text
//! α_i  = min(o_i · exp(−½ dᵀ Σ₂D⁻¹ d), α_max),   d = pixel center − μ₂D
//! F[p] = Σ f_i α_i T_i,   T_i = Π_{j<i} (1 − α_j)
//! ```
//!
//! Contributions with `α_i < α_min` are skipped and blending stops once the
//! transmittance falls below `T_min`. Pixel `(row, col)` covers
//! `[col, col+1) × [row, row+1)` and is sampled at its center; x runs along
//! columns, y along rows, and pixel `(0, 0)` starts at `(x_min, y_min)`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::attributes::GaussianPrimitive3D;
use crate::cloud::{BevRange, PointCloud};
use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};
use crate::par;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlendOrder {
    /// Lowest mean z first, ties by source index.
    #[default]
    ZAsc,
    /// Highest mean z first, ties by source index.
    ZDesc,
    /// Source index only.
    Index,
}

impl BlendOrder {
    pub fn as_str(&self) -> &'static str {
        match self {
            BlendOrder::ZAsc => "z-asc",
            BlendOrder::ZDesc => "z-desc",
            BlendOrder::Index => "index",
        }
    }
}

impl fmt::Display for BlendOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlendOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z-asc" => Ok(BlendOrder::ZAsc),
            "z-desc" => Ok(BlendOrder::ZDesc),
            "index" => Ok(BlendOrder::Index),
            other => Err(Error::InvalidConfig(format!(
                "blend order {other:?} is not one of z-asc, z-desc, index"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterConfig {
    pub alpha_max: f64,
    pub alpha_min: f64,
    /// Early-stop transmittance; `None` blends every overlapping splat.
    pub t_min: Option<f64>,
    /// Added to the projected covariance diagonal, pixels².
    pub lambda_blur: f64,
    pub tile_size: usize,
    pub blend_order: BlendOrder,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            t_min: Some(1e-4),
            lambda_blur: 0.3,
            tile_size: 16,
            blend_order: BlendOrder::ZAsc,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return bad(format!("alpha_max {} must lie in (0, 1]", self.alpha_max));
        }
        if !(self.alpha_min >= 0.0 && self.alpha_min <= self.alpha_max) {
            return bad(format!("alpha_min {} must lie in [0, alpha_max]", self.alpha_min));
        }
        if let Some(t) = self.t_min {
            if !(0.0..1.0).contains(&t) {
                return bad(format!("t_min {t} must lie in [0, 1)"));
            }
        }
        if !(self.lambda_blur >= 0.0) || !self.lambda_blur.is_finite() {
            return bad(format!(
                "lambda_blur {} must be finite and non-negative",
                self.lambda_blur
            ));
        }
        if self.tile_size == 0 {
            return bad("tile_size must be at least 1".into());
        }
        Ok(())
    }
}

/// A Gaussian on the BEV plane, in pixel units.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean2d: Vec2,
    pub cov2d: Mat2,
    pub cov2d_inv: Mat2,
    pub features: Vec<f64>,
    pub opacity: f64,
    /// `(mean z, source index)`.
    pub blend_key: (f64, usize),
}

impl Splat2D {
    /// Builds a splat directly from screen-space parameters.
    pub fn new(mean2d: Vec2, cov2d: Mat2, features: Vec<f64>, opacity: f64, blend_key: (f64, usize)) -> Result<Self> {
        let cov2d_inv = invert_cov2d(&cov2d)?;
        Ok(Splat2D {
            mean2d,
            cov2d,
            cov2d_inv,
            features,
            opacity,
            blend_key,
        })
    }

    /// Half-width in pixels of the square holding every pixel center this
    /// splat can reach with `α ≥ α_min`: at least 3σ along the major axis.
    pub fn footprint_radius(&self, cfg: &RasterConfig) -> Option<f64> {
        let o = self.opacity;
        if !(o >= cfg.alpha_min) || o <= 0.0 {
            return None;
        }
        let reach = if cfg.alpha_min > 0.0 {
            (2.0 * (o / cfg.alpha_min).ln()).sqrt()
        } else {
            f64::INFINITY
        };
        Some(reach.max(3.0) * self.cov2d.max_eigenvalue_sym().sqrt() + 1e-6)
    }

    /// Unclamped, unthresholded `o · exp(−½ dᵀ Σ⁻¹ d)` at pixel coordinate `p`.
    #[inline]
    fn density(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean2d[0];
        let dy = py - self.mean2d[1];
        let m = &self.cov2d_inv.0;
        let power = -0.5 * (m[0][0] * dx * dx + (m[0][1] + m[1][0]) * dx * dy + m[1][1] * dy * dy);
        self.opacity * power.exp()
    }
}

fn invert_cov2d(cov: &Mat2) -> Result<Mat2> {
    let det = cov.det();
    if !(det > 0.0 && cov.0[0][0] > 0.0) {
        return Err(Error::SingularCovariance { det });
    }
    cov.inverse().map_err(|_| Error::SingularCovariance { det })
}

/// Orthographic projection with scaling; `source_index` becomes the blend tie-break.
pub fn project_to_bev(
    g: &GaussianPrimitive3D,
    source_index: usize,
    range: &BevRange,
    lambda_blur: f64,
) -> Result<Splat2D> {
    let m = range.projection();
    let rel = [g.mean[0] - range.x_min, g.mean[1] - range.y_min, g.mean[2]];
    let mean2d = m.mul_vec(&rel);
    let sigma = g.covariance()?;
    let mut cov2d = m.congruence(&sigma);
    cov2d.0[0][0] += lambda_blur;
    cov2d.0[1][1] += lambda_blur;
    Splat2D::new(mean2d, cov2d, g.features.clone(), g.opacity, (g.mean[2], source_index))
}

pub fn project_all(gaussians: &[GaussianPrimitive3D], range: &BevRange, lambda_blur: f64) -> Result<Vec<Splat2D>> {
    par::map_range(gaussians.len(), |i| {
        project_to_bev(&gaussians[i], i, range, lambda_blur)
    })
    .into_iter()
    .collect()
}

/// Splat indices in blending order.
pub fn blend_sequence(splats: &[Splat2D], order: BlendOrder) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..splats.len()).collect();
    let by_index = |a: &usize, b: &usize| splats[*a].blend_key.1.cmp(&splats[*b].blend_key.1);
    match order {
        BlendOrder::ZAsc => idx.sort_by(|a, b| {
            splats[*a]
                .blend_key
                .0
                .total_cmp(&splats[*b].blend_key.0)
                .then_with(|| by_index(a, b))
        }),
        BlendOrder::ZDesc => idx.sort_by(|a, b| {
            splats[*b]
                .blend_key
                .0
                .total_cmp(&splats[*a].blend_key.0)
                .then_with(|| by_index(a, b))
        }),
        BlendOrder::Index => idx.sort_by(by_index),
    }
    idx
}

/// Per-tile splat lists, each in global blending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<usize>>,
}

impl TileGrid {
    pub fn build(splats: &[Splat2D], range: &BevRange, cfg: &RasterConfig) -> TileGrid {
        let ts = cfg.tile_size;
        let tiles_x = range.w.div_ceil(ts);
        let tiles_y = range.h.div_ceil(ts);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for i in blend_sequence(splats, cfg.blend_order) {
            let s = &splats[i];
            let Some(rad) = s.footprint_radius(cfg) else { continue };
            let Some((c0, c1)) = pixel_span(s.mean2d[0], rad, range.w) else {
                continue;
            };
            let Some((r0, r1)) = pixel_span(s.mean2d[1], rad, range.h) else {
                continue;
            };
            for ty in r0 / ts..=r1 / ts {
                for tx in c0 / ts..=c1 / ts {
                    lists[ty * tiles_x + tx].push(i);
                }
            }
        }
        TileGrid {
            tile_size: ts,
            tiles_x,
            tiles_y,
            lists,
        }
    }
}

/// Inclusive range of pixels along one axis whose cells meet `[c − rad, c + rad]`.
fn pixel_span(center: f64, rad: f64, n: usize) -> Option<(usize, usize)> {
    let lo = (center - rad).floor();
    let hi = (center + rad).floor();
    if !(hi >= 0.0) || !(lo < n as f64) {
        return None;
    }
    Some((lo.max(0.0) as usize, (hi as usize).min(n - 1)))
}

/// Dense `C × H × W` feature map, channel-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BevFeatureMap {
    pub channels: usize,
    pub range: BevRange,
    pub data: Vec<f32>,
}

const MAP_MAGIC: &[u8; 4] = b"RGFM";
const MAP_VERSION: u32 = 1;

impl BevFeatureMap {
    pub fn zeros(channels: usize, range: BevRange) -> Self {
        BevFeatureMap {
            channels,
            range,
            data: vec![0.0; channels * range.h * range.w],
        }
    }

    #[inline]
    pub fn index(&self, ch: usize, row: usize, col: usize) -> usize {
        (ch * self.range.h + row) * self.range.w + col
    }

    pub fn get(&self, ch: usize, row: usize, col: usize) -> f32 {
        self.data[self.index(ch, row, col)]
    }

    pub fn channel(&self, ch: usize) -> &[f32] {
        let plane = self.range.h * self.range.w;
        &self.data[ch * plane..(ch + 1) * plane]
    }

    /// Pixels with at least one nonzero channel.
    pub fn nonzero_pixels(&self) -> usize {
        let plane = self.range.h * self.range.w;
        (0..plane)
            .filter(|&p| (0..self.channels).any(|ch| self.data[ch * plane + p] != 0.0))
            .count()
    }

    pub fn max_abs_diff(&self, other: &BevFeatureMap) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let r = &self.range;
        let mut out = Vec::with_capacity(52 + self.data.len() * 4);
        out.extend_from_slice(MAP_MAGIC);
        for v in [MAP_VERSION, self.channels as u32, r.h as u32, r.w as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [r.x_min, r.x_max, r.y_min, r.y_max] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        if bytes.len() < 52 || &bytes[..4] != MAP_MAGIC {
            return Err(Error::format(origin, "missing RGFM header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let float = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        if word(4) != MAP_VERSION as usize {
            return Err(Error::format(origin, format!("unsupported version {}", word(4))));
        }
        let (channels, h, w) = (word(8), word(12), word(16));
        let range = BevRange::new(float(20), float(28), float(36), float(44), h, w)
            .map_err(|e| Error::format(origin, e.to_string()))?;
        let n = channels * h * w;
        if bytes.len() != 52 + n * 4 {
            return Err(Error::format(
                origin,
                format!("payload holds {} bytes, expected {}", bytes.len() - 52, n * 4),
            ));
        }
        let data = bytes[52..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(BevFeatureMap { channels, range, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    /// Binary PGM (P5) of one channel, min-max normalized to 0..=255. Row 0
    /// (y_min) is the first image row.
    pub fn to_pgm(&self, ch: usize) -> Result<Vec<u8>> {
        if ch >= self.channels {
            return Err(Error::InvalidConfig(format!(
                "channel {ch} out of range, map has {}",
                self.channels
            )));
        }
        let plane = self.channel(ch);
        let (lo, hi) = plane.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let mut out = format!("P5\n{} {}\n255\n", self.range.w, self.range.h).into_bytes();
        let span = hi - lo;
        out.extend(plane.iter().map(|&v| {
            if span > 0.0 {
                (((v - lo) / span) * 255.0).round() as u8
            } else {
                0
            }
        }));
        Ok(out)
    }
}

/// Tiled rasterizer. Feature accumulation is `f32`; opacity and transmittance
/// are evaluated in `f64` so that skip decisions match the oracle exactly.
pub fn rasterize(splats: &[Splat2D], range: &BevRange, cfg: &RasterConfig) -> Result<BevFeatureMap> {
    cfg.validate()?;
    range.validate()?;
    let channels = check_channels(splats)?;
    let grid = TileGrid::build(splats, range, cfg);
    let ts = cfg.tile_size;
    let feats32: Vec<Vec<f32>> = splats
        .iter()
        .map(|s| s.features.iter().map(|&v| v as f32).collect())
        .collect();

    let tiles: Vec<Vec<f32>> = par::map_range(grid.lists.len(), |t| {
        let list = &grid.lists[t];
        let (tx, ty) = (t % grid.tiles_x, t / grid.tiles_x);
        let mut buf = vec![0.0f32; ts * ts * channels];
        if list.is_empty() {
            return buf;
        }
        for ly in 0..ts {
            let row = ty * ts + ly;
            if row >= range.h {
                break;
            }
            for lx in 0..ts {
                let col = tx * ts + lx;
                if col >= range.w {
                    break;
                }
                let acc = &mut buf[(ly * ts + lx) * channels..(ly * ts + lx + 1) * channels];
                let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
                let mut transmittance = 1.0f64;
                for &i in list {
                    let alpha = splats[i].density(px, py).min(cfg.alpha_max);
                    if !(alpha >= cfg.alpha_min) {
                        continue;
                    }
                    let weight = (alpha * transmittance) as f32;
                    acc.iter_mut().zip(&feats32[i]).for_each(|(a, f)| *a += f * weight);
                    transmittance *= 1.0 - alpha;
                    if cfg.t_min.is_some_and(|t| transmittance < t) {
                        break;
                    }
                }
            }
        }
        buf
    });

    let mut map = BevFeatureMap::zeros(channels, *range);
    for (t, buf) in tiles.iter().enumerate() {
        let (tx, ty) = (t % grid.tiles_x, t / grid.tiles_x);
        for ly in 0..ts.min(range.h - ty * ts) {
            for lx in 0..ts.min(range.w - tx * ts) {
                let px = &buf[(ly * ts + lx) * channels..(ly * ts + lx + 1) * channels];
                for (ch, v) in px.iter().enumerate() {
                    let at = map.index(ch, ty * ts + ly, tx * ts + lx);
                    map.data[at] = *v;
                }
            }
        }
    }
    Ok(map)
}

/// Brute force: every splat at every pixel, `f64` accumulation, no tiles and
/// no early stop. Shares the blend order, clamp and `α_min` skip with
/// [`rasterize`].
pub fn rasterize_oracle(splats: &[Splat2D], range: &BevRange, cfg: &RasterConfig) -> Result<BevFeatureMap> {
    cfg.validate()?;
    range.validate()?;
    let channels = check_channels(splats)?;
    let order = blend_sequence(splats, cfg.blend_order);
    let mut map = BevFeatureMap::zeros(channels, *range);
    let mut acc = vec![0.0f64; channels];
    for row in 0..range.h {
        for col in 0..range.w {
            acc.fill(0.0);
            let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
            let mut transmittance = 1.0f64;
            for &i in &order {
                let alpha = splats[i].density(px, py).min(cfg.alpha_max);
                if !(alpha >= cfg.alpha_min) {
                    continue;
                }
                acc.iter_mut()
                    .zip(&splats[i].features)
                    .for_each(|(a, f)| *a += f * alpha * transmittance);
                transmittance *= 1.0 - alpha;
            }
            for (ch, v) in acc.iter().enumerate() {
                let at = map.index(ch, row, col);
                map.data[at] = *v as f32;
            }
        }
    }
    Ok(map)
}

fn check_channels(splats: &[Splat2D]) -> Result<usize> {
    let channels = splats.first().map_or(0, |s| s.features.len());
    if let Some(s) = splats.iter().find(|s| s.features.len() != channels) {
        return Err(Error::ShapeMismatch(format!(
            "splat {} has {} channels, expected {channels}",
            s.blend_key.1,
            s.features.len()
        )));
    }
    Ok(channels)
}

/// One-pixel-per-point baseline: every in-range point writes the mean raw
/// features of its cell. Points outside the range are dropped.
pub fn pillar_scatter(cloud: &PointCloud, range: &BevRange) -> BevFeatureMap {
    let c = cloud.c_raw();
    let plane = range.h * range.w;
    let mut sums = vec![0.0f64; c * plane];
    let mut counts = vec![0u32; plane];
    for p in cloud.points() {
        if let Some((row, col)) = range.pixel_of(p.position[0], p.position[1]) {
            let at = row * range.w + col;
            counts[at] += 1;
            for (ch, f) in p.raw_features.iter().enumerate() {
                sums[ch * plane + at] += f;
            }
        }
    }
    let data = sums
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let n = counts[k % plane];
            if n == 0 {
                0.0
            } else {
                (s / n as f64) as f32
            }
        })
        .collect();
    BevFeatureMap {
        channels: c,
        range: *range,
        data,
    }
}

/// Number of distinct BEV cells holding at least one point.
pub fn pillar_occupancy(cloud: &PointCloud, range: &BevRange) -> usize {
    let mut seen = vec![false; range.h * range.w];
    for p in cloud.points() {
        if let Some((row, col)) = range.pixel_of(p.position[0], p.position[1]) {
            seen[row * range.w + col] = true;
        }
    }
    seen.iter().filter(|&&s| s).count()
}
