//! `quasiwalk`: experiments on quasimorphisms along random walks.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 configuration or usage
//! error, 3 capacity exceeded, 4 a `--check` gate failed. Errors go to
//! standard error as one line of JSON.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasiwalk::Error;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::commands::Context;
use crate::output::{Checks, Output};

#[derive(Parser)]
#[command(name = "quasiwalk", version, about = "Quasimorphisms along random walks on free groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exit with status 4 unless every acceptance check passes.
    #[arg(long, global = true)]
    check: bool,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `output.dir` of the config, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides a configuration field, e.g. `--set walk.trials=1000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Records wall time in the report (reports are then no longer reproducible byte for byte).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Independent walks and phi(z_n).
    Walk,
    /// Central limit theorem experiment.
    Clt,
    /// Law of the iterated logarithm along one trajectory.
    Lil,
    /// Distortion a_n and the drift.
    Distortion,
    /// Brute-force defect probe.
    Defect,
    /// Cesàro quasi-biharmonic representative and its residuals.
    Harmonic,
    /// Tameness semi-decision.
    Tame,
    /// Backward-product martingale variance (and the sandwich check).
    Martingale,
    /// Boundary cocycle, integral representation, variance and cylinder checks.
    Boundary,
    /// Reconstruction of phi_hat through the Radon-Nikodym kernel.
    RnKernel,
    /// Pools report files and cross-checks sigma estimates.
    Report {
        /// Report JSON files written by other subcommands.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Multiple of the combined standard error allowed between sigma estimates.
        #[arg(long, default_value_t = 3.0)]
        se_multiple: f64,
        /// Allowed relative difference between sigma estimates.
        #[arg(long, default_value_t = 0.10)]
        relative: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Walk => "walk",
            Command::Clt => "clt",
            Command::Lil => "lil",
            Command::Distortion => "distortion",
            Command::Defect => "defect",
            Command::Harmonic => "harmonic",
            Command::Tame => "tame",
            Command::Martingale => "martingale",
            Command::Boundary => "boundary",
            Command::RnKernel => "rn-kernel",
            Command::Report { .. } => "report",
        }
    }
}

enum Failure {
    Core(Error),
    Usage(String),
    Io(String),
    Check(Vec<String>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(Error::Capacity(_)) => 3,
            Failure::Core(Error::Stream(_)) | Failure::Io(_) => 1,
            Failure::Core(_) | Failure::Usage(_) => 2,
            Failure::Check(_) => 4,
        }
    }

    fn to_json(&self) -> Value {
        let (kind, message) = match self {
            Failure::Core(e) => (error_kind(e), e.to_string()),
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Io(m) => ("io", m.clone()),
            Failure::Check(failed) => ("check", format!("failed checks: {}", failed.join(", "))),
        };
        json!({"error": kind, "code": self.code(), "message": message})
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::UnknownSymbol(_) => "unknown-symbol",
        Error::AlphabetMismatch(_) => "alphabet-mismatch",
        Error::Capacity(_) => "capacity",
        Error::Config(_) => "config",
        Error::Coverage(_) => "coverage",
        Error::Mode(_) => "mode",
        Error::Unsupported(_) => "unsupported",
        Error::Stream(_) => "stream",
        Error::InvalidArgument(_) => "invalid-argument",
        Error::Incompatible(_) => "incompatible",
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Io(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let usage = message.lines().find(|l| l.starts_with("Usage:")).unwrap_or("").to_string();
            eprintln!("{}", json!({"error": "usage", "code": 2, "message": first, "usage": usage}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let common = cli.common;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let name = cli.command.name();
    let (body, checks, output) = match cli.command {
        Command::Report { inputs, se_multiple, relative } => {
            let mut docs = Vec::new();
            for path in &inputs {
                let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                let doc: Value = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column())))?;
                docs.push(doc);
            }
            let mut hasher = Sha256::new();
            for d in &docs {
                hasher.update(d.get("config_hash").and_then(Value::as_str).unwrap_or("").as_bytes());
            }
            let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
            let seeds: Vec<Value> = docs.iter().map(|d| d.get("seed").cloned().unwrap_or(Value::Null)).collect();
            let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let output = Output::new(name, dir, hash, Value::Array(seeds), common.timing).map_err(io_failure)?;
            let (body, checks) = commands::report(&docs, se_multiple, relative)?;
            (body, checks, output)
        }
        command => {
            let path = common
                .config
                .as_ref()
                .ok_or_else(|| Failure::Usage(format!("`{name}` needs --config <FILE>")))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let (config, doc) = config::parse(&text, &common.overrides, common.seed)?;
            let hash = config::config_hash(&doc);
            let dir = common
                .out
                .clone()
                .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out"));
            let mut output = Output::new(name, dir, hash, json!(config.seed), common.timing).map_err(io_failure)?;
            let ctx = Context::new(config)?;
            let (body, checks): (Value, Checks) = match command {
                Command::Walk => commands::walk(&ctx, &mut output)?,
                Command::Clt => commands::clt(&ctx, &mut output)?,
                Command::Lil => commands::lil(&ctx, &mut output)?,
                Command::Distortion => commands::distortion_cmd(&ctx, &mut output)?,
                Command::Defect => commands::defect(&ctx, &mut output)?,
                Command::Harmonic => commands::harmonic(&ctx, &mut output)?,
                Command::Tame => commands::tame(&ctx, &mut output)?,
                Command::Martingale => commands::martingale(&ctx, &mut output)?,
                Command::Boundary => commands::boundary(&ctx, &mut output)?,
                Command::RnKernel => commands::rn_kernel(&ctx, &mut output)?,
                Command::Report { .. } => unreachable!("handled above"),
            };
            (body, checks, output)
        }
    };
    let failed = checks.failed();
    let doc = output.finish(body, &checks).map_err(io_failure)?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
    if common.check && !failed.is_empty() {
        return Err(Failure::Check(failed));
    }
    Ok(())
}
