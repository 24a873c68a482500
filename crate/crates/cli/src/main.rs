//! `bulkdiff`: config-driven runs of the cell problems, the two-point
//! study and the Green–Kubo sweep, each writing CSV/JSON tables and a manifest.

mod commands;
mod config;
mod error;
mod output;
mod selftest;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bulkdiff::Exec;
use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{config_hash, output_root, RunDir, RunManifest, OUT_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "bulkdiff",
    version,
    about = "Bulk diffusion matrices of Poisson-reversible particle systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Replaces the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Exponent used for the Green–Kubo regime thresholds.
    #[arg(long, global = true)]
    alpha_override: Option<f64>,

    /// Output root when the config has none.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Cell-problem matrices per cube size and their extrapolation.
    Abar,
    /// Two-point function of the fluctuation field against the heat-kernel prediction.
    TwoPoint,
    /// Green–Kubo brackets over cube sizes and resolvent parameters.
    GreenKubo,
    /// Fast checks with exact answers.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Abar => "abar",
            Command::TwoPoint => "two-point",
            Command::GreenKubo => "green-kubo",
            Command::Selftest => "selftest",
        }
    }
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let (config, bytes) = ExperimentConfig::load(path)?;
    config.validate()?;
    Ok((config, bytes))
}

fn selftest(cli: &Cli) -> Result<(), CliError> {
    // the model is audited as written, so an out-of-range ceiling is reported rather than rejected
    let model = match &cli.config {
        Some(path) => {
            let (config, _) = ExperimentConfig::load(path)?;
            Some((config.model_unchecked()?, config.dim))
        }
        None => None,
    };
    let results = selftest::run(model);
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if failed > 0 {
        return Err(CliError::SelfTest {
            failed,
            total: results.len(),
        });
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be positive".into()));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if cli.alpha_override.is_some_and(|a| !(a >= 0.0 && a.is_finite())) {
        return Err(CliError::Config("--alpha-override must be nonnegative".into()));
    }
    if cli.command == Command::Selftest {
        return selftest(cli);
    }
    let started = Instant::now();
    let (config, bytes) = load(cli)?;
    let hash = config_hash(&bytes, cli.seed, cli.alpha_override);
    let root = config.output.clone().or_else(|| cli.out.clone());
    let mut dir = RunDir::create(&output_root(root.as_deref()), cli.command.name(), &hash)?;
    let mut ctx = Context {
        model: config.model()?,
        seed: cli.seed.unwrap_or(config.seed),
        config,
        alpha_override: cli.alpha_override,
        exec: Exec::default(),
        seeds: BTreeMap::new(),
    };
    let (summary, alpha) = match cli.command {
        Command::Abar => (commands::cmd_abar(&mut ctx, &mut dir)?, None),
        Command::TwoPoint => (commands::cmd_two_point(&mut ctx, &mut dir)?, None),
        Command::GreenKubo => {
            let (s, a, source) = commands::cmd_green_kubo(&mut ctx, &mut dir)?;
            (s, Some((a, format!("{source:?}").to_lowercase())))
        }
        Command::Selftest => unreachable!("handled above"),
    };
    let path = dir.finish(RunManifest {
        command: cli.command.name().into(),
        config_hash: hash,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seeds: ctx.seeds,
        workers: cli.workers,
        alpha: alpha.as_ref().map(|a| a.0),
        alpha_source: alpha.map(|a| a.1),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files: Vec::new(),
    })?;
    print!("{summary}");
    println!("output: {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
