use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::agents::{ActionBounds, Family, ObservationConfig, ParamDist, TypeDistribution};
use crate::ecn::{EcnEngine, EcnModel, VolumeProcess};
use crate::{Error, Result};

/// Deterministic sinusoid added to the ECN mid. A zero amplitude disables
/// it; a zero period means one full cycle per episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrendConfig {
    pub amplitude: f64,
    pub period: usize,
    pub phase: f64,
}

impl TrendConfig {
    pub fn offset(&self, t: usize, episode_len: usize) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let period = if self.period == 0 { episode_len } else { self.period };
        let x = std::f64::consts::TAU * t as f64 / period.max(1) as f64 + self.phase;
        self.amplitude * x.sin()
    }
}

/// Per-episode Bernoulli edge probabilities. `lp_lt` is drawn per LP and
/// becomes that LP's connection probability to each LT; `pnl_lt_lp`, when
/// set, replaces it for PnL-driven LTs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivityConfig {
    #[serde(default = "one")]
    pub lp_lt: ParamDist,
    #[serde(default = "one_f")]
    pub lt_ecn: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pnl_lt_lp: Option<f64>,
}

fn one() -> ParamDist {
    ParamDist::Fixed(1.0)
}

fn one_f() -> f64 {
    1.0
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        ConnectivityConfig {
            lp_lt: one(),
            lt_ecn: 1.0,
            pnl_lt_lp: None,
        }
    }
}

/// Omitted fields take their [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub n_lp: usize,
    pub n_lt_flow: usize,
    pub n_lt_pnl: usize,
    pub episode_len: usize,
    pub lp_types: TypeDistribution,
    pub lt_flow_types: TypeDistribution,
    pub lt_pnl_types: TypeDistribution,
    #[serde(default)]
    pub connectivity: ConnectivityConfig,
    #[serde(default)]
    pub trend: TrendConfig,
    /// Fraction of the reference mid's gap to its episode-start level closed
    /// per step by shifting the ECN price grid; 0 leaves impact permanent.
    #[serde(default)]
    pub mid_reversion: f64,
    /// Fitted ECN model file; the reference model built from `ecn` is used
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecn_model: Option<PathBuf>,
    #[serde(default)]
    pub ecn: VolumeProcess,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub bounds: ActionBounds,
}

impl Default for EnvConfig {
    fn default() -> Self {
        use ParamDist::*;
        EnvConfig {
            n_lp: 3,
            n_lt_flow: 12,
            n_lt_pnl: 0,
            episode_len: 256,
            lp_types: TypeDistribution::lp(
                Uniform { uniform: [0.0, 1.0] },
                Fixed(0.0),
                Uniform { uniform: [0.0, 0.5] },
            ),
            lt_flow_types: TypeDistribution {
                w: Fixed(0.0),
                alpha: Fixed(1.0),
                gamma: Fixed(0.0),
                market_share_target: None,
                flow_targets: Some(crate::agents::FlowTargetDist {
                    sell: Uniform { uniform: [0.0, 1.0] },
                    buy: Uniform { uniform: [0.0, 1.0] },
                    hold: Uniform { uniform: [0.0, 1.0] },
                }),
            },
            lt_pnl_types: TypeDistribution::lt(Fixed(1.0), Fixed(0.0), 1.0, 1.0),
            connectivity: ConnectivityConfig::default(),
            trend: TrendConfig::default(),
            mid_reversion: 0.0,
            ecn_model: None,
            ecn: VolumeProcess::default(),
            observation: ObservationConfig::default(),
            bounds: ActionBounds::default(),
        }
    }
}

impl EnvConfig {
    pub fn n_lt(&self) -> usize {
        self.n_lt_flow + self.n_lt_pnl
    }

    pub fn lp_obs_dim(&self) -> usize {
        self.observation.lp_dim()
    }

    pub fn lt_obs_dim(&self) -> usize {
        self.observation.lt_dim(self.n_lp)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("env: {m}")));
        if self.episode_len == 0 {
            return bad("episode_len must be at least 1");
        }
        if self.n_lp + self.n_lt() == 0 {
            return bad("no agents");
        }
        if self.observation.levels != self.ecn.n && self.ecn_model.is_none() {
            return bad("observation.levels must match ecn.n");
        }
        self.lp_types.validate(Family::Lp)?;
        self.lt_flow_types.validate(Family::Lt)?;
        self.lt_pnl_types.validate(Family::Lt)?;
        let (lo, hi) = self.connectivity.lp_lt.support();
        let pnl_ok = self.connectivity.pnl_lt_lp.is_none_or(|p| (0.0..=1.0).contains(&p));
        if lo < 0.0 || hi > 1.0 || !(0.0..=1.0).contains(&self.connectivity.lt_ecn) || !pnl_ok {
            return bad("connection probability outside [0, 1]");
        }
        let b = self.bounds;
        if b.as_array().iter().any(|[lo, hi]| !(lo <= hi)) || b.eps_sym[0] < -1.0 {
            return bad("invalid action bounds");
        }
        if !(0.0..=1.0).contains(&self.mid_reversion) {
            return bad("mid_reversion outside [0, 1]");
        }
        if !self.trend.amplitude.is_finite() || !self.trend.phase.is_finite() {
            return bad("trend must be finite");
        }
        Ok(())
    }

    /// Loads or builds the ECN model and checks it against the observation
    /// layout.
    pub fn build_engine(&self) -> Result<EcnEngine> {
        let model = match &self.ecn_model {
            Some(path) => EcnModel::load(path)?,
            None => EcnModel::reference(&self.ecn),
        };
        if model.n != self.observation.levels {
            return Err(Error::Config(format!(
                "ECN model has {} levels, observation expects {}",
                model.n, self.observation.levels
            )));
        }
        Ok(model.compile()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trend_zero_amplitude_is_noop() {
        let t = TrendConfig::default();
        assert!((0..100).all(|s| t.offset(s, 100) == 0.0));
    }

    #[test]
    fn trend_full_cycle_per_episode() {
        let t = TrendConfig {
            amplitude: 1.0,
            period: 0,
            phase: 0.0,
        };
        assert!(t.offset(0, 64).abs() < 1e-12);
        assert!((t.offset(16, 64) - 1.0).abs() < 1e-12);
        assert!((t.offset(48, 64) + 1.0).abs() < 1e-12);
        assert!(t.offset(64, 64).abs() < 1e-9);
    }

    #[test]
    fn default_is_valid_and_roundtrips() {
        let c = EnvConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        let back: EnvConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut text = toml::to_string(&EnvConfig::default()).unwrap();
        text.insert_str(0, "bogus = 1\n");
        assert!(toml::from_str::<EnvConfig>(&text).is_err());
    }

    #[test]
    fn zero_length_episode_rejected() {
        let c = EnvConfig {
            episode_len: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
