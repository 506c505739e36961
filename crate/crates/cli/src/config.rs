//! Plain-text run configuration: one `key = value` per line, `#` starts a
//! comment. Keys are applied in file order; unknown keys are rejected.
//! [`RunConfig::dump`] writes every key, and parsing a dump reproduces the
//! config exactly (floats use shortest round-trip notation).

use std::fmt::Write as _;
use std::path::Path;

use rgk_core::bgl::{BglConfig, ObjectClass};
use rgk_core::cloud::{BevRange, SceneSpec, DEFAULT_C_RAW};
use rgk_core::encoder::{EncoderConfig, DEFAULT_CHANNELS};
use rgk_core::lfa::DEFAULT_MEM_CAP;
use rgk_core::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub channels: usize,
    pub heads: usize,
    pub weight_seed: u64,
    pub lfa_bias: bool,
    pub mem_cap: u64,
    pub scene_c_raw: usize,
    pub scene_clusters: usize,
    pub scene_sigma: f64,
    pub scene_z_min: f64,
    pub scene_z_max: f64,
    pub bgl: BglConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scene = SceneSpec::new(0, 0);
        RunConfig {
            encoder: EncoderConfig::default(),
            channels: DEFAULT_CHANNELS,
            heads: 1,
            weight_seed: 0,
            lfa_bias: true,
            mem_cap: DEFAULT_MEM_CAP,
            scene_c_raw: DEFAULT_C_RAW,
            scene_clusters: scene.n_clusters,
            scene_sigma: scene.cluster_sigma,
            scene_z_min: scene.z_min,
            scene_z_max: scene.z_max,
            bgl: BglConfig::default(),
        }
    }
}

pub const PRESETS: [&str; 2] = ["vod", "tj4d"];

pub fn preset_range(name: &str) -> Result<BevRange> {
    match name {
        "vod" => Ok(BevRange::vod()),
        "tj4d" => Ok(BevRange::tj4d()),
        other => Err(Error::InvalidConfig(format!(
            "unknown preset {other:?} (expected one of {})",
            PRESETS.join(", ")
        ))),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("{key} = {value:?}: {e}")))
}

impl RunConfig {
    /// Applies one assignment. `preset` sets all `bev.*` keys at once.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let enc = &mut self.encoder;
        match key {
            "preset" => enc.range = preset_range(value)?,
            "lfa.radius" => enc.radius = parse(key, value)?,
            "lfa.mem_cap" => self.mem_cap = parse(key, value)?,
            "pge.channels" => self.channels = parse(key, value)?,
            "pge.heads" => self.heads = parse(key, value)?,
            "pge.weight_seed" => self.weight_seed = parse(key, value)?,
            "pge.lfa_bias" => self.lfa_bias = parse(key, value)?,
            "pge.scale_floor" => enc.scale.floor = parse(key, value)?,
            "bev.x_min" => enc.range.x_min = parse(key, value)?,
            "bev.x_max" => enc.range.x_max = parse(key, value)?,
            "bev.y_min" => enc.range.y_min = parse(key, value)?,
            "bev.y_max" => enc.range.y_max = parse(key, value)?,
            "bev.h" => enc.range.h = parse(key, value)?,
            "bev.w" => enc.range.w = parse(key, value)?,
            "raster.alpha_max" => enc.raster.alpha_max = parse(key, value)?,
            "raster.alpha_min" => enc.raster.alpha_min = parse(key, value)?,
            "raster.t_min" => {
                enc.raster.t_min = match value {
                    "off" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "raster.lambda_blur" => enc.raster.lambda_blur = parse(key, value)?,
            "raster.tile_size" => enc.raster.tile_size = parse(key, value)?,
            "raster.blend_order" => enc.raster.blend_order = value.parse()?,
            "scene.c_raw" => self.scene_c_raw = parse(key, value)?,
            "scene.clusters" => self.scene_clusters = parse(key, value)?,
            "scene.sigma" => self.scene_sigma = parse(key, value)?,
            "scene.z_min" => self.scene_z_min = parse(key, value)?,
            "scene.z_max" => self.scene_z_max = parse(key, value)?,
            "bgl.a_default" => self.bgl.a_default = parse(key, value)?,
            "bgl.lambda" => self.bgl.lambda = parse(key, value)?,
            "bgl.strict" => self.bgl.strict = parse(key, value)?,
            _ => match key.strip_prefix("bgl.a.") {
                Some(class) => {
                    let class: ObjectClass = class.parse()?;
                    self.bgl.a_per_class.insert(class, parse(key, value)?);
                }
                None => return Err(Error::InvalidConfig(format!("unknown key {key:?}"))),
            },
        }
        Ok(())
    }

    /// Applies `key = value` lines from `text`; `origin` labels errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("{origin}:{}: expected `key = value`, got {line:?}", n + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| Error::InvalidConfig(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {assignment:?} is not key=value")))?;
        self.set(key.trim(), value)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let enc = &self.encoder;
        if !(enc.radius > 0.0) || !enc.radius.is_finite() {
            return bad(format!("lfa.radius must be positive, got {}", enc.radius));
        }
        if self.mem_cap == 0 {
            return bad("lfa.mem_cap must be positive".into());
        }
        if self.channels == 0 {
            return bad("pge.channels must be at least 1".into());
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return bad(format!(
                "pge.heads = {} must divide pge.channels = {}",
                self.heads, self.channels
            ));
        }
        if !(enc.scale.floor > 0.0) || !enc.scale.floor.is_finite() {
            return bad(format!("pge.scale_floor must be positive, got {}", enc.scale.floor));
        }
        enc.range.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        enc.raster.validate()?;
        self.scene(0, 0)
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.bgl.validate()
    }

    /// Scene parameters for `generate`, drawn over the configured BEV range.
    pub fn scene(&self, seed: u64, n_points: usize) -> SceneSpec {
        let mut spec = SceneSpec::new(seed, n_points);
        spec.c_raw = self.scene_c_raw;
        spec.n_clusters = self.scene_clusters;
        spec.cluster_sigma = self.scene_sigma;
        spec.z_min = self.scene_z_min;
        spec.z_max = self.scene_z_max;
        spec.range = self.encoder.range;
        spec
    }

    /// Every key in canonical order.
    pub fn dump(&self) -> String {
        let enc = &self.encoder;
        let r = &enc.range;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to String");
        put("lfa.radius", format!("{:?}", enc.radius));
        put("lfa.mem_cap", self.mem_cap.to_string());
        put("pge.channels", self.channels.to_string());
        put("pge.heads", self.heads.to_string());
        put("pge.weight_seed", self.weight_seed.to_string());
        put("pge.lfa_bias", self.lfa_bias.to_string());
        put("pge.scale_floor", format!("{:?}", enc.scale.floor));
        put("bev.x_min", format!("{:?}", r.x_min));
        put("bev.x_max", format!("{:?}", r.x_max));
        put("bev.y_min", format!("{:?}", r.y_min));
        put("bev.y_max", format!("{:?}", r.y_max));
        put("bev.h", r.h.to_string());
        put("bev.w", r.w.to_string());
        put("raster.alpha_max", format!("{:?}", enc.raster.alpha_max));
        put("raster.alpha_min", format!("{:?}", enc.raster.alpha_min));
        put(
            "raster.t_min",
            enc.raster.t_min.map_or("off".into(), |t| format!("{t:?}")),
        );
        put("raster.lambda_blur", format!("{:?}", enc.raster.lambda_blur));
        put("raster.tile_size", enc.raster.tile_size.to_string());
        put("raster.blend_order", enc.raster.blend_order.to_string());
        put("scene.c_raw", self.scene_c_raw.to_string());
        put("scene.clusters", self.scene_clusters.to_string());
        put("scene.sigma", format!("{:?}", self.scene_sigma));
        put("scene.z_min", format!("{:?}", self.scene_z_min));
        put("scene.z_max", format!("{:?}", self.scene_z_max));
        for (class, a) in &self.bgl.a_per_class {
            put(&format!("bgl.a.{class}"), format!("{a:?}"));
        }
        put("bgl.a_default", format!("{:?}", self.bgl.a_default));
        put("bgl.lambda", format!("{:?}", self.bgl.lambda));
        put("bgl.strict", self.bgl.strict.to_string());
        out
    }
}

/// Builds a config from an optional preset, config file and overrides,
/// applied in the order file, preset, overrides, then validates it.
pub fn resolve(preset: Option<&str>, file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    if let Some(name) = preset {
        cfg.encoder.range = preset_range(name)?;
    }
    for o in overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
