use std::io::Write;
use std::path::{Path, PathBuf};

use rgk_core::bgl::{bgl_gradient, bgl_gradient_fd, bgl_terms, gradient_rel_error, read_boxes};
use rgk_core::cloud::{generate_scene, read_cloud, write_cloud};
use rgk_core::encoder::{encode, init_weights, EncoderParams};
use rgk_core::lfa::LfaMethod;
use rgk_core::splat::pillar_occupancy;
use rgk_core::Error;

use crate::bench::{run_bench, BenchSpec};
use crate::config::RunConfig;
use crate::num::sig9;
use crate::selftest::run_selftest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Gate(String),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(Error::InvalidConfig(_) | Error::InvalidSpec(_)) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Gate(_) => 4,
            CliError::Output(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Core(e) => e.kind(),
            CliError::Gate(_) => "GateFailure",
            CliError::Output(_) => "IoError",
        }
    }

    /// `error: kind=<Kind> msg=<message>` on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error: kind={} msg={msg}", self.kind())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub struct GenerateArgs {
    pub seed: u64,
    pub n: usize,
    pub out: PathBuf,
}

pub fn cmd_generate(cfg: &RunConfig, args: &GenerateArgs, out: &mut dyn Write) -> CliResult {
    let cloud = generate_scene(&cfg.scene(args.seed, args.n))?;
    write_cloud(&cloud, &args.out)?;
    writeln!(out, "n={}", cloud.len())?;
    writeln!(out, "c_raw={}", cloud.c_raw())?;
    writeln!(out, "path={}", args.out.display())?;
    Ok(())
}

pub struct EncodeArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub weights: Option<PathBuf>,
    pub save_weights: Option<PathBuf>,
    pub pgm_channel: Option<usize>,
    pub pgm_out: Option<PathBuf>,
    pub compare_pillar: bool,
}

fn default_pgm_path(out: &Path, ch: usize) -> PathBuf {
    out.with_extension(format!("ch{ch}.pgm"))
}

pub fn cmd_encode(cfg: &RunConfig, args: &EncodeArgs, out: &mut dyn Write) -> CliResult {
    let cloud = read_cloud(&args.input)?;
    let params = match &args.weights {
        Some(p) => EncoderParams::read(p)?,
        None => init_weights(cfg.weight_seed, cloud.c_raw(), cfg.channels, cfg.heads, cfg.lfa_bias)?,
    };
    if let Some(p) = &args.save_weights {
        params.write(p)?;
    }
    let map = encode(&cloud, &params, &cfg.encoder)?;
    map.write(&args.out)?;
    let nonzero = map.nonzero_pixels();
    writeln!(out, "points={}", cloud.len())?;
    writeln!(out, "channels={}", map.channels)?;
    writeln!(out, "height={}", map.range.h)?;
    writeln!(out, "width={}", map.range.w)?;
    writeln!(out, "nonzero_pixels={nonzero}")?;
    if let Some(ch) = args.pgm_channel {
        let path = args.pgm_out.clone().unwrap_or_else(|| default_pgm_path(&args.out, ch));
        let bytes = map.to_pgm(ch)?;
        std::fs::write(&path, bytes).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        writeln!(out, "pgm={}", path.display())?;
    }
    if args.compare_pillar {
        let pillar = pillar_occupancy(&cloud, &cfg.encoder.range);
        writeln!(out, "pillar_pixels={pillar}")?;
        let ratio = if pillar == 0 {
            f64::NAN
        } else {
            nonzero as f64 / pillar as f64
        };
        writeln!(out, "density_ratio={}", sig9(ratio))?;
    }
    writeln!(out, "path={}", args.out.display())?;
    Ok(())
}

pub fn parse_methods(list: &str) -> CliResult<Vec<LfaMethod>> {
    list.split(',')
        .map(|m| {
            LfaMethod::ALL
                .into_iter()
                .find(|x| x.name() == m.trim())
                .ok_or_else(|| CliError::Usage(format!("unknown LFA method {m:?}")))
        })
        .collect()
}

pub struct BenchArgs {
    pub spec: BenchSpec,
    pub csv: Option<PathBuf>,
}

pub fn cmd_bench_lfa(args: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let (report, failures) = run_bench(&args.spec)?;
    for n in &args.spec.sizes {
        let bad: Vec<_> = failures.iter().filter(|f| f.n == *n).collect();
        if bad.is_empty() {
            writeln!(out, "gate n={n}: ok (all outputs within 1e-9 of traversal)")?;
        } else {
            for f in bad {
                writeln!(
                    out,
                    "gate n={n}: FAIL {} max_abs_diff={}",
                    f.method,
                    sig9(f.max_abs_diff)
                )?;
            }
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Gate(format!(
            "{} implementation(s) disagree with traversal",
            failures.len()
        )));
    }
    write!(out, "{}", report.to_table())?;
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv()).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        writeln!(out, "csv={}", path.display())?;
    }
    Ok(())
}

pub struct BglArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub out: Option<PathBuf>,
    pub grad_check: bool,
    pub fd_step: f64,
}

/// Largest gradient check error tolerated by `bgl --grad-check`.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

pub fn cmd_bgl(cfg: &RunConfig, args: &BglArgs, out: &mut dyn Write) -> CliResult {
    let pred = read_boxes(&args.pred)?;
    let gt = read_boxes(&args.gt)?;
    let (terms, mean) = bgl_terms(&pred.boxes, &gt.boxes, &gt.classes, &cfg.bgl)?;
    let mut csv = String::from("idx,mahalanobis,trace,logdet,total\n");
    for (i, t) in terms.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            sig9(t.mahalanobis),
            sig9(t.trace),
            sig9(t.logdet),
            sig9(t.total)
        ));
    }
    csv.push_str(&format!("batch_mean,{}\n", sig9(mean)));
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            writeln!(out, "batch_mean={}", sig9(mean))?;
        }
        None => write!(out, "{csv}")?,
    }
    if args.grad_check {
        if !(args.fd_step > 0.0) {
            return Err(CliError::Usage("--fd-step must be positive".into()));
        }
        let mut worst = 0.0f64;
        for (i, (p, g)) in pred.boxes.iter().zip(&gt.boxes).enumerate() {
            let a = cfg.bgl.a_for(gt.classes[i]);
            let analytic = bgl_gradient(p, g, a)?;
            let fd = bgl_gradient_fd(p, g, a, args.fd_step)?;
            worst = worst.max(gradient_rel_error(&analytic, &fd));
        }
        writeln!(out, "grad_check_max_rel_err={}", sig9(worst))?;
        if !(worst < GRAD_CHECK_TOLERANCE) {
            return Err(CliError::Gate(format!(
                "gradient check error {} exceeds {GRAD_CHECK_TOLERANCE}",
                sig9(worst)
            )));
        }
    }
    Ok(())
}

pub fn cmd_selftest(cfg: &RunConfig, weights: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let results = run_selftest(cfg, weights);
    for r in &results {
        writeln!(out, "{}", r.line())?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    writeln!(
        out,
        "selftest: {}/{} checks passed",
        results.len() - failed.len(),
        results.len()
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gate(format!("failed checks: {}", failed.join(","))))
    }
}
