//! `dealersim`: calibrate the ECN model, train, evaluate and run experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "dealersim", version, about = "Multi-agent dealer market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; defaults are used for anything it omits.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print what would run and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the ECN mixtures to snapshot data (synthetic by default).
    Calibrate(Common),
    /// Train LP and LT policies.
    Train {
        #[command(flatten)]
        common: Common,
        /// Resume from the `lp.json`/`lt.json` in this directory.
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Play frozen policies and write metric rows.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Run a preset or configured experiment sweep.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Preset name; see `--dry-run` with any preset for its sweep.
        preset: Option<String>,
    },
}

fn load(common: &Common, checkpoint: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(c) = checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    let level = config::log_filter(&cfg.log_level).unwrap_or(log::LevelFilter::Info);
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
    if let Some(n) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(cfg)
}

fn dry_run(cmd: &str, cfg: &RunConfig) -> Result<()> {
    println!("{cmd}: seed {}, output {}", cfg.seed, cfg.out.display());
    print!("{}", toml::to_string(cfg)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(common) => {
            let cfg = load(&common, None)?;
            if common.dry_run {
                return dry_run("calibrate", &cfg);
            }
            commands::calibrate_cmd(&cfg).map(|_| ())
        }
        Command::Train { common, checkpoint } => {
            let cfg = load(&common, checkpoint.as_ref())?;
            if common.dry_run {
                return dry_run("train", &cfg);
            }
            commands::train_cmd(&cfg)
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = load(&common, checkpoint.as_ref())?;
            if common.dry_run {
                return dry_run("evaluate", &cfg);
            }
            commands::evaluate_cmd(&cfg)
        }
        Command::Experiment { common, preset } => {
            let cfg = load(&common, None)?;
            commands::experiment_cmd(&cfg, preset.as_deref(), common.seed, common.dry_run)
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
