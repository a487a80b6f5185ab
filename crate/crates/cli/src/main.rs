//! `wongzakai`: batch front-end for the Wong-Zakai convergence experiments.
//!
//! Every subcommand writes its CSV tables and a `manifest.json` into `--out`.
//! Exit status: 0 on success, 1 on invalid input, 2 on a numerical abort.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "wongzakai", version, about = "Wong-Zakai approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Moment axioms of the polygonal approximant
    Moments(Common),
    /// Monte Carlo estimates of the correction tensor
    Cjn(Common),
    /// Sup-norm convergence of the approximant to the Wiener path
    Sup(Common),
    /// Convergence of the pathwise ODE to the corrected SDE
    ConvergeSde(Common),
    /// Convergence of the Galerkin weak solutions
    ConvergeSpde(Common),
    /// Residuals of the error decomposition identity
    Decompose(Common),
    /// Increment-bound ratios
    Lemmas(Common),
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// TOML config; top-level keys plus a section named after the subcommand
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed of every random stream
    #[arg(long)]
    seed: u64,
    /// Output directory (created if missing)
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for replica parallelism
    #[arg(long)]
    threads: Option<usize>,
    /// Reuse binary path dumps from this directory
    #[arg(long)]
    cache_paths: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Moments,
    Cjn,
    Sup,
    ConvergeSde,
    ConvergeSpde,
    Decompose,
    Lemmas,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Moments => "moments",
            Command::Cjn => "cjn",
            Command::Sup => "sup",
            Command::ConvergeSde => "converge-sde",
            Command::ConvergeSpde => "converge-spde",
            Command::Decompose => "decompose",
            Command::Lemmas => "lemmas",
        }
    }
}

impl CommandArgs {
    fn split(self) -> (Command, Common) {
        match self {
            CommandArgs::Moments(c) => (Command::Moments, c),
            CommandArgs::Cjn(c) => (Command::Cjn, c),
            CommandArgs::Sup(c) => (Command::Sup, c),
            CommandArgs::ConvergeSde(c) => (Command::ConvergeSde, c),
            CommandArgs::ConvergeSpde(c) => (Command::ConvergeSpde, c),
            CommandArgs::Decompose(c) => (Command::Decompose, c),
            CommandArgs::Lemmas(c) => (Command::Lemmas, c),
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| e.downcast_ref::<wz_core::Error>().is_some_and(|e| e.is_numerical()));
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (cmd, args) = cli.command.split();
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create output directory {}: {e}", args.out.display());
        return ExitCode::from(1);
    }
    let mut manifest = RunManifest::new(cmd.name(), args.config.as_deref(), &args.out, args.seed, args.threads);
    let result = commands::run(cmd, &args.config, args.seed, args.threads, args.cache_paths.as_deref(), &mut manifest);
    let (code, message) = match &result {
        Ok(()) => (0, None),
        Err(e) => {
            eprintln!("error: {e:#}");
            (exit_code(e), Some(format!("{e:#}")))
        }
    };
    if let Err(e) = manifest.finish(message) {
        eprintln!("error: cannot write manifest: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
