//! `eigengame`: synthesize data, run the solvers, compute dense oracles.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors.

mod commands;
mod layering;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{GraphArgs, OracleArgs, PcaArgs, SynthArgs};

#[derive(Debug, Parser)]
#[command(name = "eigengame", version, about = "Streaming top-k eigendecomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a covariance with a prescribed spectrum and its eigensystem.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Learn the top-k eigenvectors of a covariance or a data matrix.
    #[command(args_override_self = true)]
    Pca(PcaArgs),
    /// Learn the bottom-k Laplacian eigenvectors of an edge list.
    #[command(args_override_self = true)]
    Graph(GraphArgs),
    /// Dense eigendecomposition of a matrix or a graph Laplacian.
    #[command(args_override_self = true)]
    Oracle(OracleArgs),
}

/// Bad flags or configuration; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(eigengame::Error::Config(_)) = cause.downcast_ref::<eigengame::Error>() {
            return 2;
        }
    }
    1
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("EIGENGAME_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("EIGENGAME_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run() -> anyhow::Result<()> {
    let argv: Vec<String> = std::env::args().collect();
    let layered = layering::layer_args(&argv)?;
    let cli = match Cli::try_parse_from(&layered.argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return Err(usage(e.render().to_string())),
        Err(e) => {
            e.print()?;
            return Ok(());
        }
    };
    configure_threads()?;
    match cli.command {
        Command::Synth(args) => commands::synth(args, &layered),
        Command::Pca(args) => commands::pca(args, &layered),
        Command::Graph(args) => commands::graph(args, &layered),
        Command::Oracle(args) => commands::oracle(args, &layered),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if err.is::<UsageError>() {
                let msg = err.to_string();
                let msg = msg.trim_end();
                if msg.starts_with("error:") {
                    eprintln!("{msg}");
                } else {
                    eprintln!("error: {msg}");
                }
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
