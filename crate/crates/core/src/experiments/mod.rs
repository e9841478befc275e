//! Sweeps of environment configurations: train per point and seed, evaluate
//! the frozen policies and write metric rows plus a summary.

pub mod analysis;
mod presets;
pub mod rows;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use analysis::{
    flow_by_tweak, group_pnl, lt_frequencies, mean_tweak, pnl_decomposition, skew_intensity, tweak_distribution,
    AgentEpisodePnl, FlowBucket, GroupPnl, Histogram, SkewIntensity, TweakDistribution, TweakMeans,
};
pub use presets::{preset, PRESETS};
pub use rows::{episode_rows, export_csv, import_csv, read_csv, write_csv, AgentGroup, CsvRecord, MetricRow};

use crate::agents::Family;
use crate::env::EnvConfig;
use crate::rl::{derive_seed, evaluate, EvalConfig, IterationLog, Models, Trainer, TrainingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub key: String,
    pub env: EnvConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub sweep: Vec<SweepPoint>,
    /// When set, one model per seed is trained on this environment (typically
    /// with the swept parameter drawn per episode) and evaluated at every
    /// sweep point; otherwise each point trains its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_env: Option<EnvConfig>,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_width")]
    pub flow_bucket_width: f64,
}

fn default_bins() -> usize {
    30
}

fn default_width() -> f64 {
    0.05
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("experiment {}: {m}", self.name)));
        if self.sweep.is_empty() {
            return bad("needs at least one sweep point".into());
        }
        if self.seeds.is_empty() {
            return bad("needs at least one seed".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate seeds".into());
        }
        let mut keys: Vec<&str> = self.sweep.iter().map(|p| p.key.as_str()).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate sweep keys".into());
        }
        if self.histogram_bins == 0 || !(self.flow_bucket_width > 0.0) {
            return bad("histogram_bins and flow_bucket_width must be positive".into());
        }
        for p in &self.sweep {
            p.env.validate()?;
        }
        if let Some(env) = &self.train_env {
            env.validate()?;
            for p in &self.sweep {
                if p.env.lp_obs_dim() != env.lp_obs_dim() || p.env.lt_obs_dim() != env.lt_obs_dim() {
                    return bad(format!("sweep point {} does not match the training environment's shapes", p.key));
                }
            }
        }
        self.training.validate()?;
        Ok(())
    }

    /// Replaces the seed list with `n` consecutive seeds starting at `base`,
    /// keeping its length.
    pub fn reseed(&mut self, base: u64) {
        let n = self.seeds.len() as u64;
        self.seeds = (0..n).map(|k| base.wrapping_add(k)).collect();
    }

    /// One line per job, as run by [`run_experiment`].
    pub fn describe(&self) -> Vec<String> {
        let mut out = vec![format!(
            "experiment {}: {} sweep points x {} seeds, {} iterations x {} episodes, {} eval episodes, {}",
            self.name,
            self.sweep.len(),
            self.seeds.len(),
            self.training.iterations,
            self.training.rollout_episodes,
            self.eval.episodes,
            if self.train_env.is_some() { "one shared model per seed" } else { "one model per point and seed" }
        )];
        for p in &self.sweep {
            let e = &p.env;
            out.push(format!(
                "  {}: n_lp={} n_lt_flow={} n_lt_pnl={} T={} seeds={:?}",
                p.key, e.n_lp, e.n_lt_flow, e.n_lt_pnl, e.episode_len, self.seeds
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean_eps: Option<f64>,
    pub skew_intensity: Option<f64>,
    pub pnl: Vec<GroupPnl>,
    /// Executed (sell, buy, hold) frequencies per LT group.
    pub lt_frequencies: Vec<(AgentGroup, [f64; 3])>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_key: String,
    pub rows: usize,
    pub mean_eps: Option<TweakMeans>,
    pub skew_intensity: Option<SkewIntensity>,
    pub pnl: Vec<GroupPnl>,
    pub flow_by_tweak: Vec<FlowBucket>,
    pub tweak_distribution: Option<TweakDistribution>,
    pub per_seed: Vec<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub points: Vec<PointSummary>,
}

impl Summary {
    pub fn point(&self, key: &str) -> Option<&PointSummary> {
        self.points.iter().find(|p| p.sweep_key == key)
    }
}

fn seed_summary(seed: u64, rows: &[MetricRow]) -> SeedSummary {
    let decomp = pnl_decomposition(rows);
    SeedSummary {
        seed,
        mean_eps: mean_tweak(rows).ok().map(|m| m[0].eps),
        skew_intensity: skew_intensity(rows).ok().map(|s| s[0].intensity),
        pnl: group_pnl(&decomp),
        lt_frequencies: [AgentGroup::Flow, AgentGroup::Pnl]
            .into_iter()
            .filter_map(|g| lt_frequencies(rows, g).map(|f| (g, f)))
            .collect(),
    }
}

/// Aggregates one sweep point's rows (all seeds). Pure in the rows.
pub fn summarize_point(
    key: &str,
    rows: &[MetricRow],
    seeds: &[u64],
    bins: usize,
    width: f64,
) -> Result<PointSummary> {
    let decomp = pnl_decomposition(rows);
    let per_seed = seeds
        .iter()
        .map(|&s| {
            let mine: Vec<MetricRow> = rows.iter().filter(|r| r.seed == s).cloned().collect();
            seed_summary(s, &mine)
        })
        .collect();
    let has_lp = rows.iter().any(|r| r.group == AgentGroup::Lp);
    Ok(PointSummary {
        sweep_key: key.to_string(),
        rows: rows.len(),
        mean_eps: if has_lp { mean_tweak(rows)?.pop() } else { None },
        skew_intensity: if has_lp { skew_intensity(rows)?.pop() } else { None },
        pnl: group_pnl(&decomp),
        flow_by_tweak: if has_lp { flow_by_tweak(rows, width)? } else { Vec::new() },
        tweak_distribution: if has_lp { tweak_distribution(rows, bins)?.pop() } else { None },
        per_seed,
    })
}

/// Paths and aggregates produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: Summary,
}

fn job_stem(index: usize, key: &str, seed: u64) -> String {
    let clean: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{index:02}-{clean}-seed{seed}")
}

pub const CURVE_HEADER: &str = "iteration,lp_mean_episode_reward,lt_mean_episode_reward";

/// Writes a training curve, one row per iteration. With `append`, rows go
/// after an existing file's contents and the header is only written for a
/// new file.
pub fn write_curve(path: &Path, logs: &[IterationLog], append: bool) -> Result<()> {
    let fresh = !append || !path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut f = std::io::BufWriter::new(file);
    if fresh {
        writeln!(f, "{CURVE_HEADER}")?;
    }
    for l in logs {
        writeln!(f, "{},{},{}", l.iteration, l.lp_mean_episode_reward, l.lt_mean_episode_reward)?;
    }
    f.flush()?;
    Ok(())
}

/// Trains one model and writes `{stem}-curve.csv`, `{stem}-lp.json` and
/// `{stem}-lt.json` to `dir`.
fn train(env: &EnvConfig, spec: &ExperimentSpec, seed: u64, dir: &Path, stem: &str) -> Result<Models> {
    let engine = Arc::new(env.build_engine()?);
    let mut trainer = Trainer::new(env.clone(), engine, spec.training.clone(), seed)?;
    let logs = trainer.run(spec.training.iterations)?;
    write_curve(&dir.join(format!("{stem}-curve.csv")), &logs, false)?;
    trainer.checkpoint(Family::Lp).save(&dir.join(format!("{stem}-lp.json")))?;
    trainer.checkpoint(Family::Lt).save(&dir.join(format!("{stem}-lt.json")))?;
    info!(
        "{} seed {}: final lp reward {:.4}, lt reward {:.4}",
        spec.name,
        seed,
        logs.last().map_or(f64::NAN, |l| l.lp_mean_episode_reward),
        logs.last().map_or(f64::NAN, |l| l.lt_mean_episode_reward),
    );
    Ok(trainer.models)
}

/// Evaluates frozen models at one sweep point and writes the rows.
fn evaluate_point(spec: &ExperimentSpec, index: usize, seed: u64, models: &Models, jobs_dir: &Path) -> Result<PathBuf> {
    let point = &spec.sweep[index];
    let engine = Arc::new(point.env.build_engine()?);
    let episodes = evaluate(
        &point.env,
        &engine,
        models,
        spec.training.lp_control,
        &spec.eval,
        derive_seed(seed, 0xE7A1, 0),
    )?;
    let rows: Vec<MetricRow> = episodes
        .iter()
        .enumerate()
        .flat_map(|(k, e)| episode_rows(&spec.name, &point.key, seed, k, e))
        .collect();
    let path = jobs_dir.join(format!("{}.csv", job_stem(index, &point.key, seed)));
    export_csv(&rows, &path)?;
    Ok(path)
}

/// Trains, then evaluates every (sweep point, seed) pair in parallel, each
/// into its own file under `out/jobs`, then merges them into `out/rows.csv` and writes
/// `out/summary.json`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<ExperimentOutput> {
    spec.validate()?;
    let jobs_dir = out.join("jobs");
    std::fs::create_dir_all(&jobs_dir).map_err(|e| Error::Io(format!("{}: {e}", jobs_dir.display())))?;
    let jobs: Vec<(usize, u64)> = (0..spec.sweep.len())
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let paths: Vec<PathBuf> = match &spec.train_env {
        None => jobs
            .par_iter()
            .map(|&(i, s)| {
                let models = train(&spec.sweep[i].env, spec, s, &jobs_dir, &job_stem(i, &spec.sweep[i].key, s))?;
                evaluate_point(spec, i, s, &models, &jobs_dir)
            })
            .collect::<Result<_>>()?,
        Some(env) => {
            let models: Vec<Models> = spec
                .seeds
                .par_iter()
                .map(|&s| train(env, spec, s, &jobs_dir, &format!("shared-seed{s}")))
                .collect::<Result<_>>()?;
            jobs.par_iter()
                .map(|&(i, s)| {
                    let k = spec.seeds.iter().position(|&x| x == s).expect("seed from the list");
                    evaluate_point(spec, i, s, &models[k], &jobs_dir)
                })
                .collect::<Result<_>>()?
        }
    };

    let rows_path = out.join("rows.csv");
    let mut merged = std::io::BufWriter::new(
        std::fs::File::create(&rows_path).map_err(|e| Error::Io(format!("{}: {e}", rows_path.display())))?,
    );
    write_csv::<MetricRow, _>(&[], &mut merged)?;
    let mut points = Vec::with_capacity(spec.sweep.len());
    for (i, point) in spec.sweep.iter().enumerate() {
        let mut rows = Vec::new();
        for (k, &(_, s)) in jobs.iter().enumerate().filter(|(_, j)| j.0 == i) {
            let text = std::fs::read(&paths[k]).map_err(|e| Error::Io(format!("{}: {e}", paths[k].display())))?;
            let body_start = text.iter().position(|&b| b == b'\n').map_or(text.len(), |p| p + 1);
            merged.write_all(&text[body_start..])?;
            let mut job_rows: Vec<MetricRow> = read_csv(text.as_slice())?;
            debug_assert!(job_rows.iter().all(|r| r.seed == s));
            rows.append(&mut job_rows);
        }
        points.push(summarize_point(&point.key, &rows, &spec.seeds, spec.histogram_bins, spec.flow_bucket_width)?);
    }
    merged.flush()?;

    let summary = Summary {
        experiment: spec.name.clone(),
        seeds: spec.seeds.clone(),
        points,
    };
    let summary_path = out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    std::fs::write(&summary_path, json).map_err(|e| Error::Io(format!("{}: {e}", summary_path.display())))?;
    Ok(ExperimentOutput {
        rows_path,
        summary_path,
        summary,
    })
}
