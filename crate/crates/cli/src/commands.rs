use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use dealersim::agents::Family;
use dealersim::ecn::{calibrate, read_snapshots, synth_l2_dataset, write_snapshots};
use dealersim::experiments::{
    episode_rows, export_csv, preset, run_experiment, summarize_point, write_curve, ExperimentSpec, MetricRow,
    PRESETS,
};
use dealersim::rl::{evaluate, Checkpoint, Models, Trainer};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_checkpoints(dir: &Path) -> Result<(Checkpoint, Checkpoint)> {
    let load = |name: &str| {
        let path = dir.join(name);
        Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))
    };
    Ok((load("lp.json")?, load("lt.json")?))
}

/// Fits the ECN model to snapshot data, or to a synthetic series when no
/// data file is configured.
pub fn calibrate_cmd(cfg: &RunConfig) -> Result<PathBuf> {
    let c = &cfg.calibration;
    create_dir(&cfg.out)?;
    let (rows, tick) = match &c.data {
        Some(path) => {
            let f = std::fs::File::open(path).with_context(|| format!("calibration data {}", path.display()))?;
            (read_snapshots(std::io::BufReader::new(f))?, c.tick_size)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let rows = synth_l2_dataset(&c.synth, &mut rng);
            let path = cfg.out.join("snapshots.csv");
            let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            write_snapshots(&rows, std::io::BufWriter::new(f))?;
            (rows, c.synth.volumes.tick_size)
        }
    };
    let mut fit = c.fit.clone();
    fit.seed = cfg.seed;
    let cal = calibrate(&rows, tick, &fit).context("fitting the ECN mixtures")?;
    for (name, (first, last)) in [("init", cal.init_ll), ("delta", cal.delta_ll), ("decomp", cal.decomp_ll)] {
        info!("{name} mixture log-likelihood {first:.4} -> {last:.4}");
        println!("{name}: log-likelihood {first:.6} -> {last:.6}");
    }
    let path = cfg.out.join("ecn_model.json");
    cal.model
        .save(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    cfg.write_effective(&cfg.out)?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// Trains (or resumes) both families and writes `curve.csv`, `lp.json` and
/// `lt.json` to the output directory.
pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    let engine = Arc::new(cfg.env.build_engine()?);
    let (mut trainer, resumed) = match &cfg.checkpoint {
        Some(dir) => {
            let (lp, lt) = load_checkpoints(dir)?;
            (Trainer::resume(cfg.env.clone(), engine, cfg.training.clone(), &lp, &lt)?, true)
        }
        None => (Trainer::new(cfg.env.clone(), engine, cfg.training.clone(), cfg.seed)?, false),
    };
    let mut logs = Vec::with_capacity(cfg.training.iterations);
    for _ in 0..cfg.training.iterations {
        let l = trainer.step()?;
        info!(
            "iteration {}: lp reward {:.4}, lt reward {:.4}",
            l.iteration, l.lp_mean_episode_reward, l.lt_mean_episode_reward
        );
        logs.push(l);
    }
    let same_dir = resumed && cfg.checkpoint.as_deref() == Some(cfg.out.as_path());
    write_curve(&cfg.out.join("curve.csv"), &logs, same_dir)?;
    trainer.checkpoint(Family::Lp).save(&cfg.out.join("lp.json"))?;
    trainer.checkpoint(Family::Lt).save(&cfg.out.join("lt.json"))?;
    cfg.write_effective(&cfg.out)?;
    println!("trained {} iterations, wrote {}", logs.len(), cfg.out.display());
    Ok(())
}

/// Plays frozen checkpoints and writes `rows.csv` and `summary.json`.
pub fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let dir = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| anyhow!("evaluate needs a checkpoint directory (--checkpoint or `checkpoint` in the config)"))?;
    let (lp, lt) = load_checkpoints(dir)?;
    let models = Models {
        lp: lp.to_family_model()?,
        lt: lt.to_family_model()?,
    };
    models.check_dims(&cfg.env)?;
    create_dir(&cfg.out)?;
    let engine = Arc::new(cfg.env.build_engine()?);
    let episodes = evaluate(&cfg.env, &engine, &models, cfg.training.lp_control, &cfg.eval, cfg.seed)?;
    let rows: Vec<MetricRow> = episodes
        .iter()
        .enumerate()
        .flat_map(|(k, e)| episode_rows("evaluate", "eval", cfg.seed, k, e))
        .collect();
    let rows_path = cfg.out.join("rows.csv");
    export_csv(&rows, &rows_path)?;
    let summary = summarize_point("eval", &rows, &[cfg.seed], 30, 0.05)?;
    let path = cfg.out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    cfg.write_effective(&cfg.out)?;
    println!("evaluated {} episodes, wrote {}", episodes.len(), rows_path.display());
    Ok(())
}

/// Resolves the experiment from the command line, the config's `spec`, or
/// its `preset`.
pub fn resolve_experiment(cfg: &RunConfig, name: Option<&str>, seed: Option<u64>) -> Result<ExperimentSpec> {
    let by_name = |n: &str| {
        preset(n).ok_or_else(|| anyhow!("unknown preset {n:?} (available: {})", PRESETS.join(", ")))
    };
    let mut spec = match (name, &cfg.experiment.spec, &cfg.experiment.preset) {
        (Some(n), _, _) => by_name(n)?,
        (None, Some(s), _) => s.clone(),
        (None, None, Some(n)) => by_name(n)?,
        (None, None, None) => bail!("no experiment given (available presets: {})", PRESETS.join(", ")),
    };
    if let Some(s) = seed {
        spec.reseed(s);
    }
    spec.validate()?;
    Ok(spec)
}

pub fn experiment_cmd(cfg: &RunConfig, name: Option<&str>, seed: Option<u64>, dry_run: bool) -> Result<()> {
    let spec = resolve_experiment(cfg, name, seed)?;
    if dry_run {
        for line in spec.describe() {
            println!("{line}");
        }
        return Ok(());
    }
    create_dir(&cfg.out)?;
    let mut effective = cfg.clone();
    effective.experiment.preset = None;
    effective.experiment.spec = Some(spec.clone());
    let out = run_experiment(&spec, &cfg.out)?;
    effective.write_effective(&cfg.out)?;
    println!("wrote {} and {}", out.rows_path.display(), out.summary_path.display());
    Ok(())
}
