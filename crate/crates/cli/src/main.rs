//! `anisofrac`: command-line front end for the anisofrac library.

mod abp;
mod barrier;
mod config;
mod eval;
mod geometry;
mod output;
mod solve;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anisofrac::{Error, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use output::OutDir;
use verify::Check;

/// Result of a subcommand: written files and the `result` block of the summary.
pub struct Outcome {
    pub files: Vec<String>,
    pub result: serde_json::Value,
}

/// A validated subcommand, ready to compute.
pub type Job = Box<dyn FnOnce(&OutDir) -> Result<Outcome>>;

#[derive(Parser)]
#[command(name = "anisofrac", version, about = "Anisotropic fractional Laplacian experiments")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate L and the Pucci operators of a function on a point list.
    Eval,
    /// Barrier sweep of η, power barrier search and Ψ calibration.
    Barrier,
    /// Search for (κ, τ) in the Silvestre inequality.
    Silvestre,
    /// Concave envelope and rectangle family of a grid function.
    Abp,
    /// Dirichlet solve on a grid.
    Solve,
    /// Regularity checks on a solved or provided grid function.
    Verify {
        #[arg(value_enum)]
        check: Check,
    },
    /// Inclusion certificates, ℭ and volume checks.
    Geometry,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Eval => "eval".into(),
            Command::Barrier => "barrier".into(),
            Command::Silvestre => "silvestre".into(),
            Command::Abp => "abp".into(),
            Command::Solve => "solve".into(),
            Command::Verify { check } => format!("verify {}", serde_json::to_value(check).expect("enum").as_str().expect("name")),
            Command::Geometry => "geometry".into(),
        }
    }
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Range("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Range(format!("thread pool: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| Error::Range("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    let out_path = cfg.out.clone().ok_or_else(|| Error::Range("no output directory: pass --out or set `out`".into()))?;
    let job = match &cli.command {
        Command::Eval => eval::prepare(&cfg)?,
        Command::Barrier => barrier::prepare_barrier(&cfg)?,
        Command::Silvestre => barrier::prepare_silvestre(&cfg)?,
        Command::Abp => abp::prepare(&cfg)?,
        Command::Solve => solve::prepare(&cfg)?,
        Command::Verify { check } => verify::prepare(&cfg, *check)?,
        Command::Geometry => geometry::prepare(&cfg)?,
    };
    let out = OutDir::create(out_path)?;
    out.config(&cfg)?;
    let o = job(&out)?;
    let mut files = vec!["config.json".to_string(), "summary.json".to_string()];
    files.extend(o.files);
    let refs: Vec<&str> = files.iter().map(String::as_str).collect();
    out.summary(&cli.command.name(), cfg.seed, &refs, o.result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            // a closed pipe downstream is not an error of the run
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("anisofrac: {e}");
            ExitCode::FAILURE
        }
    }
}
