//! The run configuration file: one TOML tree shared by all subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dealersim::ecn::{CalibrationConfig, SynthConfig};
use dealersim::env::EnvConfig;
use dealersim::experiments::ExperimentSpec;
use dealersim::rl::{EvalConfig, TrainingConfig};
use serde::{Deserialize, Serialize};

pub const EFFECTIVE_CONFIG: &str = "effective-config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    pub log_level: String,
    pub out: PathBuf,
    /// Directory holding `lp.json` and `lt.json`, for `evaluate` and for
    /// resuming `train`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub env: EnvConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub calibration: CalibrationSection,
    pub experiment: ExperimentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            log_level: "info".into(),
            out: PathBuf::from("out"),
            checkpoint: None,
            env: EnvConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
            calibration: CalibrationSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    /// Snapshot CSV to fit; synthetic data is generated when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub tick_size: f64,
    pub fit: CalibrationConfig,
    pub synth: SynthConfig,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            data: None,
            tick_size: 0.01,
            fit: CalibrationConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// A full experiment definition, used instead of a preset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<ExperimentSpec>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("{}", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if log_filter(&self.log_level).is_none() {
            bail!("unknown log_level {:?}", self.log_level);
        }
        self.env.validate()?;
        self.training.validate()?;
        if !(self.calibration.tick_size > 0.0) {
            bail!("calibration.tick_size must be positive");
        }
        if self.experiment.preset.is_some() && self.experiment.spec.is_some() {
            bail!("experiment.preset and experiment.spec are mutually exclusive");
        }
        if let Some(s) = &self.experiment.spec {
            s.validate()?;
        }
        Ok(())
    }

    /// Writes the configuration with every default filled in.
    pub fn write_effective(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(EFFECTIVE_CONFIG);
        let text = toml::to_string(self).context("serializing effective config")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn log_filter(level: &str) -> Option<log::LevelFilter> {
    level.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("sed = 3\n").unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
        assert!(RunConfig::parse("[env]\nn_lps = 2\n").is_err());
    }

    #[test]
    fn effective_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = 9;
        cfg.env.n_lt_pnl = 2;
        cfg.experiment.spec = dealersim::experiments::preset("connectivity");
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::parse("log_level = \"loud\"\n").is_err());
        assert!(RunConfig::parse("[env]\nepisode_len = 0\n").is_err());
        assert!(RunConfig::parse("[experiment]\npreset = \"diversity\"\n[experiment.spec]\nname = \"x\"\nsweep = []\nseeds = [0]\n").is_err());
    }
}
