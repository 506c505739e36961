use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rgk::bench::BenchSpec;
use rgk::commands::{
    cmd_bench_lfa, cmd_bgl, cmd_encode, cmd_generate, cmd_selftest, parse_methods, BenchArgs, BglArgs, CliError,
    CliResult, EncodeArgs, GenerateArgs,
};
use rgk::config::{resolve, RunConfig};
use rgk_core::cloud::DEFAULT_C_RAW;

#[derive(Parser)]
#[command(
    name = "rgk",
    version,
    about = "Radar point Gaussian encoder, BEV splatting and box Gaussian loss"
)]
struct Cli {
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, env = "RGK_THREADS", default_value_t = 0)]
    threads: usize,

    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// BEV range and resolution preset: vod or tj4d.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Config override `key=value`, repeatable; applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic radar cloud (.rgpc binary, .csv text).
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n: usize,
        /// Raw feature channels; defaults to `scene.c_raw`.
        #[arg(long)]
        c_raw: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a cloud into a BEV feature map (RGFM).
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Encoder parameters (RGWT); seeded from `pge.weight_seed` if absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Also write the parameters used.
        #[arg(long)]
        save_weights: Option<PathBuf>,
        /// Export this channel as an 8-bit PGM.
        #[arg(long)]
        pgm_channel: Option<usize>,
        /// PGM path; defaults to the output path with `.ch<k>.pgm`.
        #[arg(long, requires = "pgm_channel")]
        pgm_out: Option<PathBuf>,
        /// Report occupied pixels of a one-pixel-per-point pillar scatter.
        #[arg(long)]
        compare_pillar: bool,
    },
    /// Time the three LFA implementations after a correctness gate.
    BenchLfa {
        #[arg(long, value_delimiter = ',', default_value = "100,1000,2000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_C_RAW)]
        c_raw: usize,
        /// Output channels; defaults to `pge.channels`.
        #[arg(long)]
        channels: Option<usize>,
        /// Neighborhood radius; defaults to `lfa.radius`.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value = "traversal,broadcast_mask,index_scatter")]
        methods: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Box Gaussian loss between aligned predicted and ground-truth box files.
    Bgl {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the per-pair CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Verify analytic gradients against central differences.
        #[arg(long)]
        grad_check: bool,
        #[arg(long, default_value_t = 1e-5)]
        fd_step: f64,
    },
    /// Run the reduced oracle and property suite.
    Selftest {
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    let cfg = resolve(cli.preset.as_deref(), cli.config.as_deref(), &cli.overrides)?;
    if cli.dump_config {
        write!(out, "{}", cfg.dump())?;
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let command = cli
        .command
        .ok_or_else(|| CliError::Usage("no command given (see --help)".into()))?;
    dispatch(&cfg, command, out)
}

fn dispatch(cfg: &RunConfig, command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Generate {
            seed,
            n,
            c_raw,
            out: path,
        } => {
            let mut cfg = cfg.clone();
            if let Some(c) = c_raw {
                cfg.scene_c_raw = c;
            }
            cmd_generate(&cfg, &GenerateArgs { seed, n, out: path }, out)
        }
        Command::Encode {
            input,
            out: path,
            weights,
            save_weights,
            pgm_channel,
            pgm_out,
            compare_pillar,
        } => cmd_encode(
            cfg,
            &EncodeArgs {
                input,
                out: path,
                weights,
                save_weights,
                pgm_channel,
                pgm_out,
                compare_pillar,
            },
            out,
        ),
        Command::BenchLfa {
            sizes,
            reps,
            seed,
            c_raw,
            channels,
            radius,
            methods,
            csv,
        } => {
            let spec = BenchSpec {
                sizes,
                c_raw,
                channels: channels.unwrap_or(cfg.channels),
                radius: radius.unwrap_or(cfg.encoder.radius),
                reps,
                seed,
                mem_cap: cfg.mem_cap,
                methods: parse_methods(&methods)?,
            };
            cmd_bench_lfa(&BenchArgs { spec, csv }, out)
        }
        Command::Bgl {
            pred,
            gt,
            out: path,
            grad_check,
            fd_step,
        } => cmd_bgl(
            cfg,
            &BglArgs {
                pred,
                gt,
                out: path,
                grad_check,
                fd_step,
            },
            out,
        ),
        Command::Selftest { weights } => cmd_selftest(cfg, weights.as_deref(), out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
