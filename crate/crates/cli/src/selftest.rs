//! Reduced-size oracle and property checks run by `rgk selftest`.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rgk_core::bgl::{
    bgl_gradient, bgl_gradient_fd, box_kl, box_to_gaussian, gradient_rel_error, kl_divergence, Box3D,
    GaussianDistribution3D,
};
use rgk_core::cloud::{cloud_from_bytes, cloud_to_bytes, generate_scene, BevRange, SceneSpec};
use rgk_core::encoder::{encode, init_weights, EncoderParams};
use rgk_core::geom::{Mat2, Mat3};
use rgk_core::lfa::{run_lfa, transient_bytes, LfaMethod, DEFAULT_MEM_CAP};
use rgk_core::nn::LinearLayer;
use rgk_core::rng::Rng;
use rgk_core::splat::{pillar_occupancy, rasterize, rasterize_oracle, BevFeatureMap, RasterConfig, Splat2D};

use crate::config::RunConfig;

pub struct CheckResult {
    pub name: &'static str,
    pub outcome: Result<String, String>,
    pub seconds: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn line(&self) -> String {
        match &self.outcome {
            Ok(detail) => format!("PASS {} ({detail}; {:.2}s)", self.name, self.seconds),
            Err(reason) => format!("FAIL {}: {reason}", self.name),
        }
    }
}

type Check = Box<dyn Fn() -> Result<String, String>>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs every check in order. `weights`, when given, is loaded and used for
/// the encoder checks instead of freshly seeded parameters.
pub fn run_selftest(cfg: &RunConfig, weights: Option<&Path>) -> Vec<CheckResult> {
    let mut checks: Vec<(&'static str, Check)> = vec![
        ("rng_known_answer", Box::new(check_rng)),
        ("lfa_equivalence", Box::new(check_lfa)),
        ("lfa_memory_order", Box::new(check_lfa_memory)),
        ("raster_oracle", Box::new(check_raster)),
        ("single_splat", Box::new(check_single_splat)),
        ("bgl_examples", Box::new(check_bgl_examples)),
        ("bgl_a_invariance", Box::new(check_a_invariance)),
        ("bgl_gradient", Box::new(check_gradient)),
        ("cloud_roundtrip", Box::new(check_cloud_io)),
    ];
    let cfg_a = cfg.clone();
    checks.push(("config_roundtrip", Box::new(move || check_config(&cfg_a))));
    let cfg_w = cfg.clone();
    let path: Option<PathBuf> = weights.map(Path::to_path_buf);
    checks.push((
        "weights_load",
        Box::new(move || load_params(&cfg_w, path.as_deref(), 4).map(|(_, d)| d)),
    ));
    let cfg_e = cfg.clone();
    let path: Option<PathBuf> = weights.map(Path::to_path_buf);
    checks.push((
        "encode_determinism",
        Box::new(move || check_encode(&cfg_e, path.as_deref())),
    ));
    let cfg_d = cfg.clone();
    let path: Option<PathBuf> = weights.map(Path::to_path_buf);
    checks.push(("density", Box::new(move || check_density(&cfg_d, path.as_deref()))));

    checks
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let outcome = f();
            CheckResult {
                name,
                outcome,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn load_params(cfg: &RunConfig, weights: Option<&Path>, c_raw: usize) -> Result<(EncoderParams, String), String> {
    match weights {
        Some(p) => {
            let params = EncoderParams::read(p).map_err(|e| e.to_string())?;
            if params.c_raw() != c_raw {
                return Err(format!(
                    "weights expect c_raw = {}, selftest scenes have {c_raw}",
                    params.c_raw()
                ));
            }
            Ok((params, format!("loaded {}", p.display())))
        }
        None => init_weights(cfg.weight_seed, c_raw, cfg.channels, cfg.heads, cfg.lfa_bias)
            .map(|p| (p, format!("seeded with {}", cfg.weight_seed)))
            .map_err(|e| e.to_string()),
    }
}

fn check_rng() -> Result<String, String> {
    let mut rng = Rng::seed_from_u64(1);
    let got = [rng.next_u64(), rng.next_u64(), rng.next_u64()];
    let want = [0xB3F2AF6D0FC710C5, 0x853B559647364CEA, 0x92F89756082A4514];
    ensure(got == want, || format!("xoshiro256** stream {got:x?}"))?;
    let cloud = generate_scene(&SceneSpec::new(1, 100)).map_err(|e| e.to_string())?;
    ensure(
        *cloud.position(0) == [36.35131706230561, 1.9524598322523672, 2.0],
        || format!("scene first point {:?}", cloud.position(0)),
    )?;
    Ok("generator streams match frozen values".into())
}

fn check_lfa() -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut scenes = 0;
    for (k, n) in [1usize, 10, 100, 400].into_iter().enumerate() {
        for (m, r) in [0.1, 0.32, 1.0].into_iter().enumerate() {
            let seed = (k * 3 + m) as u64;
            let cloud = generate_scene(&SceneSpec::new(seed, n)).map_err(|e| e.to_string())?;
            let layer = LinearLayer::init(7, 64, true, &mut Rng::seed_from_u64(seed + 100));
            let oracle =
                run_lfa(LfaMethod::Traversal, &cloud, &layer, r, DEFAULT_MEM_CAP).map_err(|e| e.to_string())?;
            for method in [LfaMethod::BroadcastMask, LfaMethod::IndexScatter] {
                let out = run_lfa(method, &cloud, &layer, r, DEFAULT_MEM_CAP).map_err(|e| e.to_string())?;
                worst = worst.max(out.max_abs_diff(&oracle));
            }
            scenes += 1;
        }
    }
    ensure(worst <= 1e-9, || format!("max |diff| {worst:e} > 1e-9"))?;
    Ok(format!("{scenes} scenes, max |diff| {worst:e}"))
}

fn check_lfa_memory() -> Result<String, String> {
    let cloud = generate_scene(&SceneSpec::new(0, 1000)).map_err(|e| e.to_string())?;
    let pairs = rgk_core::lfa::build_neighbor_index(&cloud, 0.32)
        .map_err(|e| e.to_string())?
        .len();
    let is = transient_bytes(LfaMethod::IndexScatter, 1000, 4, 64, pairs);
    let bm = transient_bytes(LfaMethod::BroadcastMask, 1000, 4, 64, pairs);
    ensure(is * 10 <= bm, || format!("index-scatter {is} B vs broadcast {bm} B"))?;
    Ok(format!("{is} B vs {bm} B at N=1000"))
}

fn random_splats(rng: &mut Rng, n: usize, size: usize, channels: usize) -> Vec<Splat2D> {
    (0..n)
        .map(|i| {
            let sx = rng.uniform(0.6, 6.0);
            let sy = rng.uniform(0.6, 6.0);
            let rho = rng.uniform(-0.8, 0.8);
            let cov = Mat2([[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]]);
            let mean = [
                rng.uniform(-4.0, size as f64 + 4.0),
                rng.uniform(-4.0, size as f64 + 4.0),
            ];
            let feats = (0..channels).map(|_| rng.normal()).collect();
            let z = (rng.uniform(-3.0, 2.0) * 4.0).round() / 4.0;
            Splat2D::new(mean, cov, feats, rng.uniform(0.05, 1.0), (z, i)).expect("SPD by construction")
        })
        .collect()
}

fn check_raster() -> Result<String, String> {
    let mut rng = Rng::seed_from_u64(33);
    let cfg = RasterConfig {
        t_min: None,
        ..RasterConfig::default()
    };
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let range = BevRange::new(0.0, 12.8, 0.0, 9.6, 60, 80).map_err(|e| e.to_string())?;
        let splats = random_splats(&mut rng, 80, 80, 4);
        let tiled = rasterize(&splats, &range, &cfg).map_err(|e| e.to_string())?;
        let oracle = rasterize_oracle(&splats, &range, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(tiled.max_abs_diff(&oracle));
    }
    ensure(worst <= 1e-4, || format!("max |tiled - oracle| {worst:e} > 1e-4"))?;
    Ok(format!("8 scenes, max |diff| {worst:e}"))
}

fn check_single_splat() -> Result<String, String> {
    let range = BevRange::new(0.0, 3.2, 0.0, 3.2, 20, 20).map_err(|e| e.to_string())?;
    let cfg = RasterConfig::default();
    let f = vec![2.0, -1.0];
    let cov = Mat2([[1.0, 0.0], [0.0, 1.0]]);
    let one = Splat2D::new([10.5, 10.5], cov, f.clone(), 1.0, (0.0, 0)).map_err(|e| e.to_string())?;
    let map = rasterize(std::slice::from_ref(&one), &range, &cfg).map_err(|e| e.to_string())?;
    for (ch, fv) in f.iter().enumerate() {
        let want = (0.99 * fv) as f32;
        ensure(map.get(ch, 10, 10) == want, || {
            format!("single splat ch{ch}: {} vs {want}", map.get(ch, 10, 10))
        })?;
    }
    let mut two = one.clone();
    two.blend_key = (0.0, 1);
    let map = rasterize(&[one, two], &range, &cfg).map_err(|e| e.to_string())?;
    for (ch, fv) in f.iter().enumerate() {
        let want = fv * (0.99 + 0.99 * 0.01);
        let got = map.get(ch, 10, 10) as f64;
        ensure(((got - want) / want).abs() <= 1e-6, || {
            format!("stacked ch{ch}: {got} vs {want}")
        })?;
    }
    Ok("0.99·f and f·(0.99 + 0.99·0.01)".into())
}

fn check_bgl_examples() -> Result<String, String> {
    let i = GaussianDistribution3D::new([0.0; 3], Mat3::IDENTITY).map_err(|e| e.to_string())?;
    ensure(kl_divergence(&i, &i).total == 0.0, || "KL(g, g) != 0".into())?;
    let shifted = GaussianDistribution3D::new([1.0, 0.0, 0.0], Mat3::IDENTITY).map_err(|e| e.to_string())?;
    let v = kl_divergence(&shifted, &i).total;
    ensure((v - 0.5).abs() <= 1e-12, || format!("unit shift gave {v}"))?;
    let wide = GaussianDistribution3D::new([0.0; 3], Mat3::diag([4.0; 3])).map_err(|e| e.to_string())?;
    let v = kl_divergence(&wide, &i).total;
    let want = 0.5 * (9.0 - 6.0 * LN_2);
    ensure((v - want).abs() <= 1e-12, || format!("4I case gave {v}, want {want}"))?;
    let g =
        box_to_gaussian(&Box3D::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, FRAC_PI_2), 1.0, true).map_err(|e| e.to_string())?;
    ensure(g.sigma.max_abs_diff(&Mat3::diag([4.0, 1.0, 9.0])) < 1e-12, || {
        format!("rotated box Σ {:?}", g.sigma)
    })?;
    Ok("closed-form examples".into())
}

fn random_box(rng: &mut Rng) -> Box3D {
    Box3D::new(
        rng.uniform(-10.0, 10.0),
        rng.uniform(-10.0, 10.0),
        rng.uniform(-2.0, 2.0),
        rng.uniform(0.3, 6.0),
        rng.uniform(0.3, 3.0),
        rng.uniform(0.3, 3.0),
        rng.uniform(-PI, PI),
    )
}

fn check_a_invariance() -> Result<String, String> {
    let mut rng = Rng::seed_from_u64(71);
    for _ in 0..1000 {
        let (p, g) = (random_box(&mut rng), random_box(&mut rng));
        let one = box_kl(&p, &g, 1.0, false).map_err(|e| e.to_string())?;
        for a in [0.5, 3.0] {
            let t = box_kl(&p, &g, a, false).map_err(|e| e.to_string())?;
            ensure(
                (t.trace - one.trace).abs() <= 1e-10 && (t.logdet - one.logdet).abs() <= 1e-10,
                || format!("trace/logdet moved with a = {a}"),
            )?;
            let rel =
                (t.mahalanobis - a * a * one.mahalanobis).abs() / (a * a * one.mahalanobis).max(f64::MIN_POSITIVE);
            ensure(rel <= 1e-10, || {
                format!("mahalanobis scaling off by {rel:e} at a = {a}")
            })?;
        }
    }
    Ok("1000 pairs".into())
}

fn check_gradient() -> Result<String, String> {
    let mut rng = Rng::seed_from_u64(72);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (p, g) = (random_box(&mut rng), random_box(&mut rng));
        let a = if rng.next_f64() < 0.5 { 1.0 } else { 3.0 };
        let an = bgl_gradient(&p, &g, a).map_err(|e| e.to_string())?;
        let fd = bgl_gradient_fd(&p, &g, a, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(gradient_rel_error(&an, &fd));
    }
    ensure(worst <= 1e-4, || format!("max rel err {worst:e} > 1e-4"))?;
    Ok(format!("200 pairs, max rel err {worst:e}"))
}

fn check_cloud_io() -> Result<String, String> {
    let cloud = generate_scene(&SceneSpec::new(7, 300)).map_err(|e| e.to_string())?;
    let bytes = cloud_to_bytes(&cloud);
    let back = cloud_from_bytes(&bytes, "selftest").map_err(|e| e.to_string())?;
    ensure(back == cloud, || "binary cloud round trip changed the cloud".into())?;
    let csv = rgk_core::cloud::cloud_to_csv(&cloud);
    let back = rgk_core::cloud::cloud_from_csv(&csv, "selftest").map_err(|e| e.to_string())?;
    ensure(back == cloud, || "CSV cloud round trip changed the cloud".into())?;
    Ok("RGPC and CSV".into())
}

fn check_config(cfg: &RunConfig) -> Result<String, String> {
    let text = cfg.dump();
    let mut back = RunConfig::default();
    back.apply_text(&text, "dump").map_err(|e| e.to_string())?;
    ensure(&back == cfg && back.dump() == text, || {
        "dump does not parse back to the same config".into()
    })?;
    Ok(format!("{} keys", text.lines().count()))
}

fn encode_scene(cfg: &RunConfig, params: &EncoderParams, seed: u64, n: usize) -> Result<BevFeatureMap, String> {
    let mut spec = SceneSpec::new(seed, n);
    spec.range = cfg.encoder.range;
    let cloud = generate_scene(&spec).map_err(|e| e.to_string())?;
    encode(&cloud, params, &cfg.encoder).map_err(|e| e.to_string())
}

fn check_encode(cfg: &RunConfig, weights: Option<&Path>) -> Result<String, String> {
    let (params, _) = load_params(cfg, weights, 4)?;
    let a = encode_scene(cfg, &params, 5, 200)?;
    let b = encode_scene(cfg, &params, 5, 200)?;
    ensure(a.to_bytes() == b.to_bytes(), || "two encodes differ".into())?;
    ensure(a.data.iter().all(|v| v.is_finite()), || {
        "non-finite feature values".into()
    })?;
    Ok(format!("{} nonzero pixels", a.nonzero_pixels()))
}

fn check_density(cfg: &RunConfig, weights: Option<&Path>) -> Result<String, String> {
    let (params, _) = load_params(cfg, weights, 4)?;
    let mut strictly = 0;
    for seed in 0..4 {
        let mut spec = SceneSpec::new(seed, 200);
        spec.range = cfg.encoder.range;
        let cloud = generate_scene(&spec).map_err(|e| e.to_string())?;
        let map = encode(&cloud, &params, &cfg.encoder).map_err(|e| e.to_string())?;
        let (pge, pillar) = (map.nonzero_pixels(), pillar_occupancy(&cloud, &cfg.encoder.range));
        ensure(pge >= pillar, || {
            format!("seed {seed}: {pge} splatted pixels < {pillar} pillars")
        })?;
        strictly += usize::from(pge > pillar);
    }
    ensure(strictly == 4, || {
        format!("only {strictly}/4 scenes denser than pillars")
    })?;
    Ok("4/4 scenes denser than pillar scatter".into())
}
