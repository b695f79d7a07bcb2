//! `oam`: command-line front end of the sorter simulation.
//!
//! Subcommands cover the full chain: `generate` a beam, `sort` it onto
//! the detector, `calibrate` the dispersion from reference traces,
//! `process` a trace into an OAM spectrum, and `experiment` for the
//! canned end-to-end runs. Every run writes a `manifest.toml` that
//! fully determines it; re-running with that manifest as `--config`
//! reproduces the outputs (bitwise, in single-threaded mode).
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3
//! for numeric failures during a run.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum Fail {
    /// Bad configuration, arguments, or unreadable inputs (exit 2).
    Config(String),
    /// Numeric failure or output error during the run (exit 3).
    Run(String),
}

impl Fail {
    fn config(msg: impl Into<String>) -> Self {
        Fail::Config(msg.into())
    }

    fn run(msg: impl Into<String>) -> Self {
        Fail::Run(msg.into())
    }

    /// Library errors during a run are numeric failures.
    fn run_core(e: oam_core::Error) -> Self {
        Fail::Run(e.to_string())
    }

    fn exit_code(&self) -> ExitCode {
        match self {
            Fail::Config(_) => ExitCode::from(2),
            Fail::Run(_) => ExitCode::from(3),
        }
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fail::Config(m) => write!(f, "config error: {m}"),
            Fail::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "oam", version, about = "Electron OAM sorter simulation")]
struct Cli {
    /// Config file (TOML); also accepts a manifest.toml from an
    /// earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Shot-noise seed; overrides the config's [detector] seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads (0 = automatic).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    threads: usize,

    /// Also write intermediate planes and element phase maps.
    #[arg(long, global = true)]
    dump_stages: bool,

    #[command(subcommand)]
    command: Command,
}

/// `ELL=PATH` pair naming a reference trace of known OAM.
#[derive(Clone, Debug)]
struct Reference {
    ell: i64,
    path: PathBuf,
}

fn parse_reference(s: &str) -> Result<Reference, String> {
    let (ell, path) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` is not ELL=PATH (example: -1=ref_minus1.csv)"))?;
    let ell: i64 =
        ell.parse().map_err(|_| format!("`{ell}` is not an integer OAM value"))?;
    if path.is_empty() {
        return Err(format!("`{s}` names no file"));
    }
    Ok(Reference { ell, path: PathBuf::from(path) })
}

#[derive(Args)]
struct ProcessArgs {
    /// Detector trace CSV to process.
    input: PathBuf,

    /// Reference trace of known OAM, as ELL=PATH (repeatable); two or
    /// more distinct ELL values fit the calibration directly.
    #[arg(long = "reference", value_name = "ELL=PATH", value_parser = parse_reference,
          allow_hyphen_values = true)]
    references: Vec<Reference>,

    /// Zero-OAM reference trace used to build the detector response
    /// for deconvolution.
    #[arg(long, value_name = "PATH")]
    psf: Option<PathBuf>,

    /// Calibration file written by `calibrate`.
    #[arg(long, value_name = "PATH")]
    calibration: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the configured source beam and store it.
    Generate,
    /// Run a stored beam through the sorter onto the detector.
    Sort {
        /// Input field file written by `generate`.
        input: PathBuf,
    },
    /// Turn a detector trace into an OAM spectrum.
    Process(ProcessArgs),
    /// Fit the position-to-OAM calibration from reference traces.
    Calibrate {
        /// Reference trace of known OAM, as ELL=PATH (repeatable).
        #[arg(long = "reference", value_name = "ELL=PATH", value_parser = parse_reference,
              required = true, allow_hyphen_values = true)]
        references: Vec<Reference>,
    },
    /// Run a canned end-to-end experiment.
    Experiment {
        /// One of: fig1, fig2a, fig2b, fig2c, fig2d, fig3.
        name: String,
    },
}

fn pairs(references: &[Reference]) -> Vec<(i64, PathBuf)> {
    references.iter().map(|r| (r.ell, r.path.clone())).collect()
}

fn run(cli: Cli) -> Result<(), Fail> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Fail::run(format!("thread pool: {e}")))?;
    }
    let mut config = config::load(cli.config.as_deref())?;
    // Fold the seed override into the config snapshot so the manifest
    // reproduces it.
    let seed = cli.seed.unwrap_or(config.detector.seed);
    config.detector.seed = seed;
    let ctx = commands::Ctx {
        config,
        out: cli.out,
        seed,
        threads: cli.threads,
        dump_stages: cli.dump_stages,
    };
    match &cli.command {
        Command::Generate => commands::cmd_generate(&ctx),
        Command::Sort { input } => commands::cmd_sort(&ctx, input),
        Command::Process(args) => commands::cmd_process(
            &ctx,
            &args.input,
            &pairs(&args.references),
            args.psf.as_deref(),
            args.calibration.as_deref(),
        ),
        Command::Calibrate { references } => commands::cmd_calibrate(&ctx, &pairs(references)),
        Command::Experiment { name } => commands::cmd_experiment(&ctx, name),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oam: {e}");
            e.exit_code()
        }
    }
}
