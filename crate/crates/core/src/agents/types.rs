use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lp,
    Lt,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Lp => "lp",
            Family::Lt => "lt",
        })
    }
}

/// LT action space, in the order used by the flow targets and the policy
/// head: sell, buy, hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LtChoice {
    Sell,
    Buy,
    Hold,
}

impl LtChoice {
    pub const ALL: [LtChoice; 3] = [LtChoice::Sell, LtChoice::Buy, LtChoice::Hold];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn side(self) -> Option<crate::market::Side> {
        match self {
            LtChoice::Sell => Some(crate::market::Side::Sell),
            LtChoice::Buy => Some(crate::market::Side::Buy),
            LtChoice::Hold => None,
        }
    }
}

impl std::fmt::Display for LtChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LtChoice::Sell => "sell",
            LtChoice::Buy => "buy",
            LtChoice::Hold => "hold",
        })
    }
}

/// Target action frequencies of a flow-driven LT, indexed like [`LtChoice`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowTargets(pub [f64; 3]);

impl FlowTargets {
    pub fn new(sell: f64, buy: f64, hold: f64) -> Result<Self, Error> {
        let raw = [sell, buy, hold];
        let sum: f64 = raw.iter().sum();
        if raw.iter().any(|q| !(*q >= 0.0)) || !(sum > 0.0) {
            return Err(Error::Config(format!("flow targets {raw:?} cannot be normalized")));
        }
        Ok(FlowTargets(raw.map(|q| q / sum)))
    }

    pub fn get(&self, choice: LtChoice) -> f64 {
        self.0[choice.index()]
    }
}

/// Reward and connectivity parameters conditioning the shared policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentType {
    pub family: Family,
    /// Weight of the PnL term against the market-share / flow term.
    pub w: f64,
    /// PnL normalizer.
    pub alpha: f64,
    /// Risk aversion on the inventory PnL.
    pub gamma: f64,
    /// LP only.
    pub market_share_target: Option<f64>,
    /// LT only.
    pub flow_targets: Option<FlowTargets>,
    pub connect_prob_lt: f64,
    pub connect_prob_lp: f64,
    pub connect_prob_ecn: f64,
}

impl AgentType {
    pub fn validate(&self) -> Result<(), Error> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let bad = |m: &str| Err(Error::Config(format!("agent type: {m}")));
        if !unit(self.w) {
            return bad("w outside [0, 1]");
        }
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if ![self.connect_prob_lt, self.connect_prob_lp, self.connect_prob_ecn]
            .into_iter()
            .all(unit)
        {
            return bad("connection probability outside [0, 1]");
        }
        match (self.family, self.market_share_target, &self.flow_targets) {
            (Family::Lp, Some(m), None) if unit(m) => Ok(()),
            (Family::Lt, None, Some(q)) if (q.0.iter().sum::<f64>() - 1.0).abs() < 1e-9 => Ok(()),
            _ => bad("exactly one of market share target (LP) or flow targets (LT) must be set"),
        }
    }
}

/// How one scalar type parameter is drawn at episode start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamDist {
    Fixed(f64),
    Uniform { uniform: [f64; 2] },
    Choice { choice: Vec<f64> },
}

impl ParamDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ParamDist::Fixed(v) => *v,
            ParamDist::Uniform { uniform: [lo, hi] } => lo + (hi - lo) * rng.random::<f64>(),
            ParamDist::Choice { choice } => choice[rng.random_range(0..choice.len())],
        }
    }

    fn validate(&self, name: &str) -> Result<(), Error> {
        let ok = match self {
            ParamDist::Fixed(v) => v.is_finite(),
            ParamDist::Uniform { uniform: [lo, hi] } => lo.is_finite() && hi.is_finite() && lo <= hi,
            ParamDist::Choice { choice } => !choice.is_empty() && choice.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid distribution for {name}")))
        }
    }

    /// Smallest and largest value the distribution can produce.
    pub fn support(&self) -> (f64, f64) {
        match self {
            ParamDist::Fixed(v) => (*v, *v),
            ParamDist::Uniform { uniform: [lo, hi] } => (*lo, *hi),
            ParamDist::Choice { choice } => choice
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowTargetDist {
    pub sell: ParamDist,
    pub buy: ParamDist,
    #[serde(default = "zero_dist")]
    pub hold: ParamDist,
}

fn zero_dist() -> ParamDist {
    ParamDist::Fixed(0.0)
}

fn one_dist() -> ParamDist {
    ParamDist::Fixed(1.0)
}

/// Per-family type distribution. `market_share_target` is used for LPs and
/// `flow_targets` for LTs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeDistribution {
    pub w: ParamDist,
    #[serde(default = "one_dist")]
    pub alpha: ParamDist,
    #[serde(default = "zero_dist")]
    pub gamma: ParamDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market_share_target: Option<ParamDist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_targets: Option<FlowTargetDist>,
}

impl TypeDistribution {
    pub fn lp(w: ParamDist, gamma: ParamDist, m_star: ParamDist) -> Self {
        TypeDistribution {
            w,
            alpha: one_dist(),
            gamma,
            market_share_target: Some(m_star),
            flow_targets: None,
        }
    }

    pub fn lt(w: ParamDist, gamma: ParamDist, sell: f64, buy: f64) -> Self {
        TypeDistribution {
            w,
            alpha: one_dist(),
            gamma,
            market_share_target: None,
            flow_targets: Some(FlowTargetDist {
                sell: ParamDist::Fixed(sell),
                buy: ParamDist::Fixed(buy),
                hold: zero_dist(),
            }),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = ParamDist::Fixed(alpha);
        self
    }

    pub fn validate(&self, family: Family) -> Result<(), Error> {
        self.w.validate("w")?;
        self.alpha.validate("alpha")?;
        self.gamma.validate("gamma")?;
        let (wlo, whi) = self.w.support();
        let (alo, _) = self.alpha.support();
        let (glo, _) = self.gamma.support();
        if wlo < 0.0 || whi > 1.0 || alo <= 0.0 || glo < 0.0 {
            return Err(Error::Config("type distribution support out of range".into()));
        }
        match (family, &self.market_share_target, &self.flow_targets) {
            (Family::Lp, Some(m), None) => {
                m.validate("market_share_target")?;
                let (lo, hi) = m.support();
                if lo < 0.0 || hi > 1.0 {
                    return Err(Error::Config("market share target outside [0, 1]".into()));
                }
                Ok(())
            }
            (Family::Lt, None, Some(q)) => {
                for (name, d) in [("sell", &q.sell), ("buy", &q.buy), ("hold", &q.hold)] {
                    d.validate(name)?;
                    if d.support().0 < 0.0 {
                        return Err(Error::Config("negative flow target".into()));
                    }
                }
                Ok(())
            }
            (Family::Lp, _, _) => Err(Error::Config(
                "LP type distribution needs market_share_target and no flow_targets".into(),
            )),
            (Family::Lt, _, _) => Err(Error::Config(
                "LT type distribution needs flow_targets and no market_share_target".into(),
            )),
        }
    }

    /// Draws a type. Connection probabilities are filled in by the caller
    /// from the environment's connectivity settings.
    pub fn sample<R: Rng + ?Sized>(&self, family: Family, rng: &mut R) -> Result<AgentType, Error> {
        self.validate(family)?;
        let w = self.w.sample(rng);
        let alpha = self.alpha.sample(rng);
        let gamma = self.gamma.sample(rng);
        let (market_share_target, flow_targets) = match family {
            Family::Lp => (
                Some(self.market_share_target.as_ref().unwrap().sample(rng)),
                None,
            ),
            Family::Lt => {
                let q = self.flow_targets.as_ref().unwrap();
                let sell = q.sell.sample(rng);
                let buy = q.buy.sample(rng);
                let hold = q.hold.sample(rng);
                (None, Some(FlowTargets::new(sell, buy, hold)?))
            }
        };
        Ok(AgentType {
            family,
            w,
            alpha,
            gamma,
            market_share_target,
            flow_targets,
            connect_prob_lt: 0.0,
            connect_prob_lp: 0.0,
            connect_prob_ecn: 1.0,
        })
    }
}
