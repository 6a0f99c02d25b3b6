//! Command-line front end.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use commands::CliError;
use config::{Mode, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "axisym-el", version, about = "Axisymmetric liquid-crystal flow simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "EL_AXISYM_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Gl,
    Sphere,
    Galerkin,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Gl => Mode::Gl,
            ModeArg::Sphere => Mode::Sphere,
            ModeArg::Galerkin => Mode::Galerkin,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a single epsilon.
    Run(Common),
    /// Integrate every epsilon of `epsilon_list` and compare.
    Sweep(Common),
    /// Recompute the analysis files of a stored run or sweep.
    Analyze(Common),
    /// Build the Stokes eigenbasis.
    Eig(Common),
    /// Run the acceptance criteria.
    Selftest,
}

fn load(common: &Common) -> Result<Option<RunConfig>, CliError> {
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).map_err(|e| config::ConfigError::Parse {
        path: "document".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(m) = common.mode {
        cfg.mode = m.into();
        cfg.validate()?;
    }
    Ok(Some(cfg))
}

fn require(common: &Common) -> Result<RunConfig, CliError> {
    load(common)?.ok_or_else(|| {
        config::ConfigError::Invalid {
            path: "document".into(),
            message: "--config is required".into(),
        }
        .into()
    })
}

fn out_dir(common: &Common, cfg: Option<&RunConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Run a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let body = || -> Result<i32, CliError> {
        match &cli.command {
            Command::Run(c) => {
                let cfg = require(c)?;
                let a = commands::run(&cfg, &out_dir(c, Some(&cfg)))?;
                Ok(if a.energy.holds { 0 } else { 4 })
            }
            Command::Sweep(c) => {
                let cfg = require(c)?;
                let s = commands::sweep(&cfg, &out_dir(c, Some(&cfg)))?;
                Ok(if s.members.iter().all(|m| m.error.is_none()) { 0 } else { 3 })
            }
            Command::Analyze(c) => {
                let cfg = load(c)?;
                let dir = out_dir(c, cfg.as_ref());
                commands::analyze(cfg.as_ref(), &dir)?;
                Ok(0)
            }
            Command::Eig(c) => {
                let cfg = require(c)?;
                commands::eig(&cfg, &out_dir(c, Some(&cfg)))?;
                Ok(0)
            }
            Command::Selftest => {
                let results = crate::acceptance::run_all();
                for r in &results {
                    println!("{r}");
                }
                Ok(if results.iter().all(|r| r.passed) { 0 } else { 4 })
            }
        }
    };
    let run = || match body() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                3
            }
        },
        None => run(),
    }
}
