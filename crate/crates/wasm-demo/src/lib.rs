//! Browser bindings for three interactive views: a generated scene encoded to
//! a BEV feature map next to the pillar baseline, two overlapping splats
//! blended front to back, and the KL components of a box pair.

use rgk_core::bgl::{bgl_gradient, box_kl, Box3D};
use rgk_core::cloud::{generate_scene, BevRange, SceneSpec};
use rgk_core::encoder::{encode, init_weights, EncoderConfig};
use rgk_core::geom::Mat2;
use rgk_core::splat::{pillar_scatter, rasterize, BevFeatureMap, RasterConfig, Splat2D};
use wasm_bindgen::prelude::*;

const DEMO_CHANNELS: usize = 16;
const DEMO_HEADS: usize = 4;
const SPLAT_CANVAS: usize = 96;

fn js_err(e: rgk_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Row 0 of the map is `y_min`; the image is flipped so +y points up.
fn heat_rgba(map: &BevFeatureMap, ch: usize) -> Vec<u8> {
    let (h, w) = (map.range.h, map.range.w);
    let plane = map.channel(ch);
    let peak = plane.iter().fold(0.0f32, |m, v| m.max(v.abs())).max(f32::MIN_POSITIVE);
    let mut rgba = Vec::with_capacity(h * w * 4);
    for row in (0..h).rev() {
        for &v in &plane[row * w..(row + 1) * w] {
            let t = v / peak;
            // blue for negative, orange for positive, black for exact zero
            let (r, g, b) = if t >= 0.0 {
                (255.0 * t, 150.0 * t, 40.0 * t)
            } else {
                (40.0 * -t, 140.0 * -t, 255.0 * -t)
            };
            rgba.extend_from_slice(&[r as u8, g as u8, b as u8, 255]);
        }
    }
    rgba
}

fn occupancy_rgba(map: &BevFeatureMap) -> Vec<u8> {
    let (h, w) = (map.range.h, map.range.w);
    let channels = map.channels;
    let mut rgba = Vec::with_capacity(h * w * 4);
    for row in (0..h).rev() {
        for col in 0..w {
            let on = (0..channels).any(|ch| map.get(ch, row, col) != 0.0);
            let v = if on { 230 } else { 0 };
            rgba.extend_from_slice(&[v, v, v, 255]);
        }
    }
    rgba
}

#[wasm_bindgen]
pub struct SceneView {
    width: usize,
    height: usize,
    encoded: Vec<u8>,
    pillar: Vec<u8>,
    encoded_pixels: usize,
    pillar_pixels: usize,
}

#[wasm_bindgen]
impl SceneView {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    /// RGBA of the selected encoder channel.
    #[wasm_bindgen(getter)]
    pub fn encoded(&self) -> Vec<u8> {
        self.encoded.clone()
    }

    /// RGBA of the pillar baseline occupancy.
    #[wasm_bindgen(getter)]
    pub fn pillar(&self) -> Vec<u8> {
        self.pillar.clone()
    }

    #[wasm_bindgen(getter, js_name = encodedPixels)]
    pub fn encoded_pixels(&self) -> usize {
        self.encoded_pixels
    }

    #[wasm_bindgen(getter, js_name = pillarPixels)]
    pub fn pillar_pixels(&self) -> usize {
        self.pillar_pixels
    }
}

/// Generates a clustered scene, encodes it with seeded weights and renders
/// one output channel and the pillar baseline.
#[wasm_bindgen(js_name = encodeScene)]
pub fn encode_scene(seed: u32, n_points: usize, channel: usize, radius: f64) -> Result<SceneView, JsError> {
    if channel >= DEMO_CHANNELS {
        return Err(JsError::new(&format!("channel must be below {DEMO_CHANNELS}")));
    }
    let cloud = generate_scene(&SceneSpec::new(seed.into(), n_points)).map_err(js_err)?;
    let params = init_weights(seed.into(), cloud.c_raw(), DEMO_CHANNELS, DEMO_HEADS, true).map_err(js_err)?;
    let cfg = EncoderConfig {
        radius,
        ..EncoderConfig::default()
    };
    let map = encode(&cloud, &params, &cfg).map_err(js_err)?;
    let pillar = pillar_scatter(&cloud, &cfg.range);
    Ok(SceneView {
        width: cfg.range.w,
        height: cfg.range.h,
        encoded: heat_rgba(&map, channel),
        pillar: occupancy_rgba(&pillar),
        encoded_pixels: map.nonzero_pixels(),
        pillar_pixels: pillar.nonzero_pixels(),
    })
}

/// Two isotropic splats on a 96×96 canvas, red at the center and blue
/// shifted right by `offset` pixels. Returns the RGBA image followed by the
/// three channel values at the red splat's center pixel, as `f32` bytes.
#[wasm_bindgen(js_name = blendSplats)]
pub fn blend_splats(
    sigma: f64,
    offset: f64,
    opacity_red: f64,
    opacity_blue: f64,
    red_in_front: bool,
) -> Result<Vec<u8>, JsError> {
    let n = SPLAT_CANVAS;
    let range = BevRange::new(0.0, n as f64, 0.0, n as f64, n, n).map_err(js_err)?;
    let cov = Mat2([[sigma * sigma, 0.0], [0.0, sigma * sigma]]);
    let c = n as f64 / 2.0;
    // default blend order is lowest z first, so the splat in front gets the lower z
    let (z_red, z_blue) = if red_in_front { (0.0, 1.0) } else { (1.0, 0.0) };
    let splats = [
        Splat2D::new([c, c], cov, vec![1.0, 0.0, 0.0], opacity_red, (z_red, 0)).map_err(js_err)?,
        Splat2D::new([c + offset, c], cov, vec![0.0, 0.0, 1.0], opacity_blue, (z_blue, 1)).map_err(js_err)?,
    ];
    let map = rasterize(&splats, &range, &RasterConfig::default()).map_err(js_err)?;
    let mut out = Vec::with_capacity(n * n * 4 + 12);
    for row in (0..n).rev() {
        for col in 0..n {
            let v = |ch| (map.get(ch, row, col).clamp(0.0, 1.0) * 255.0) as u8;
            out.extend_from_slice(&[v(0), v(1), v(2), 255]);
        }
    }
    let center = n / 2;
    for ch in 0..3 {
        out.extend_from_slice(&map.get(ch, center, center).to_le_bytes());
    }
    Ok(out)
}

/// KL components of a predicted box against a target box, both given as
/// `[x, y, z, l, w, h, θ]`: `[mahalanobis, trace, logdet, total]` followed by
/// the seven derivatives of the total with respect to the prediction.
#[wasm_bindgen(js_name = boxKl)]
pub fn box_kl_components(pred: &[f64], gt: &[f64], a: f64) -> Result<Vec<f64>, JsError> {
    let as_box = |v: &[f64], what: &str| -> Result<Box3D, JsError> {
        let arr: [f64; 7] = v
            .try_into()
            .map_err(|_| JsError::new(&format!("{what} needs 7 values, got {}", v.len())))?;
        Ok(Box3D::from_array(arr))
    };
    let (p, g) = (as_box(pred, "prediction")?, as_box(gt, "target")?);
    let terms = box_kl(&p, &g, a, false).map_err(js_err)?;
    let grad = bgl_gradient(&p, &g, a).map_err(js_err)?;
    let mut out = vec![terms.mahalanobis, terms.trace, terms.logdet, terms.total];
    out.extend_from_slice(&grad);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splat_view_reads_back_the_blend() {
        let out = blend_splats(3.0, 0.0, 0.5, 0.5, true).unwrap();
        let n = SPLAT_CANVAS * SPLAT_CANVAS * 4;
        assert_eq!(out.len(), n + 12);
        let read = |k: usize| f32::from_le_bytes(out[n + 4 * k..n + 4 * k + 4].try_into().unwrap());
        // the red splat covers the center first; blue sees half the light
        assert!(read(0) > read(2));
        assert!(read(2) > 0.0);
        assert_eq!(read(1), 0.0);
    }

    #[test]
    fn identical_boxes_have_zero_kl() {
        let b = [1.0, 2.0, 0.5, 4.0, 1.8, 1.5, 0.3];
        let v = box_kl_components(&b, &b, 3.0).unwrap();
        assert_eq!(v.len(), 11);
        assert!(v[3].abs() < 1e-12);
        assert!(v[4..].iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn scene_view_sizes() {
        let v = encode_scene(3, 200, 0, 0.32).unwrap();
        assert_eq!(v.encoded().len(), v.width() * v.height() * 4);
        assert_eq!(v.pillar().len(), v.encoded().len());
        assert!(v.encoded_pixels() >= v.pillar_pixels());
    }
}
