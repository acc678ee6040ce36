//! `sc-cnn`: run the stochastic-computing LeNet simulator on MNIST.
//!
//! Machine-readable output is CSV with a header row, written to `--out` or
//! stdout; human summary lines follow on stdout prefixed with `#`.
//! Exit status is 0 on success, 2 on usage errors and 1 otherwise.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use sc_cnn::nn::PoolMode;

use config::{parse_u32, RunConfig};

#[derive(Debug)]
pub struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

impl UsageError {
    pub fn msg(m: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(UsageError(m.into()))
    }

    pub fn wrap(e: anyhow::Error) -> anyhow::Error {
        Self::msg(format!("{e:#}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "sc-cnn", version, about = "Stochastic-computing CNN simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// key=value config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Weight manifest (file or directory containing manifest.toml)
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[arg(long, global = true)]
    mnist_images: Option<PathBuf>,
    #[arg(long, global = true)]
    mnist_labels: Option<PathBuf>,
    /// Held-out images for --calibrate
    #[arg(long, global = true)]
    calib_images: Option<PathBuf>,
    #[arg(long, global = true)]
    calib_labels: Option<PathBuf>,
    /// Use only the first N images
    #[arg(long, global = true)]
    limit: Option<usize>,
    /// Stream length in clock cycles [default: 2^width - 1]
    #[arg(long, global = true)]
    length: Option<usize>,
    /// Converter resolution in bits, 4..=16 [default: 8]
    #[arg(long, global = true)]
    width: Option<u32>,
    /// Seed of the activation generator R_x [default: 1]
    #[arg(long, global = true, value_parser = parse_u32)]
    seed_x: Option<u32>,
    /// Seed of the weight generator R_w [default: best-ranked phase offset of
    /// R_x; with --calibrate, chosen among the top candidates]
    #[arg(long, global = true, value_parser = parse_u32)]
    seed_w: Option<u32>,
    /// Feedback mask of R_x, e.g. 0xB8
    #[arg(long, global = true, value_parser = parse_u32)]
    poly_x: Option<u32>,
    /// Feedback mask of R_w [default: same as R_x]
    #[arg(long, global = true, value_parser = parse_u32)]
    poly_w: Option<u32>,
    /// Override every pooling layer: max, min or avg
    #[arg(long, global = true)]
    pool: Option<PoolMode>,
    /// Equalize weights, scale activations from float pre-activation ranges
    /// on the calibration set and pick R_w by agreement on it
    #[arg(long, global = true)]
    calibrate: bool,
    /// Quantile of |pre-activation| taken as each layer's range [default: 0.99]
    #[arg(long, global = true)]
    calib_quantile: Option<f64>,
    /// Do not pad images to the network input size
    #[arg(long, global = true)]
    no_pad: bool,
    /// Write the CSV table here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Float vs SC accuracy over a dataset
    Evaluate,
    /// Logits of a single image
    Infer {
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Accuracy and logit error across stream lengths
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "15,31,63,127,255")]
        lengths: Vec<usize>,
    },
    /// AND/OR outputs for shared vs independent generators against the
    /// correlation-aware prediction
    CorrelationDemo {
        /// Grid divisions per operand
        #[arg(long, default_value_t = 8)]
        steps: u32,
    },
    /// Hardware resources of the network
    CostReport,
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::new();
    if let Some(path) = &common.config {
        cfg.apply_file(path).map_err(UsageError::wrap)?;
    }
    macro_rules! over {
        ($($field:ident),*) => {$(
            if common.$field.is_some() {
                cfg.$field = common.$field.clone();
            }
        )*};
    }
    over!(
        weights,
        mnist_images,
        mnist_labels,
        calib_images,
        calib_labels,
        limit,
        seed_x,
        seed_w,
        poly_x,
        poly_w,
        pool,
        out
    );
    if common.length.is_some() {
        cfg.stream_length = common.length;
    }
    if let Some(w) = common.width {
        cfg.width = w;
    }
    if let Some(q) = common.calib_quantile {
        cfg.calib_quantile = q;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.calibrate |= common.calibrate;
    cfg.no_pad |= common.no_pad;
    cfg.validate().map_err(UsageError::wrap)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    let report = match cli.command {
        Command::Evaluate => commands::evaluate(&cfg)?,
        Command::Infer { index } => commands::infer(&cfg, index)?,
        Command::Sweep { lengths } => commands::sweep(&cfg, &lengths)?,
        Command::CorrelationDemo { steps } => commands::correlation_demo(&cfg, steps)?,
        Command::CostReport => commands::cost(&cfg)?,
    };
    report.emit(cfg.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
