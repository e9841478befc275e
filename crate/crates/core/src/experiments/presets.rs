use super::{ExperimentSpec, SweepPoint};
use crate::agents::{FlowTargetDist, LpAction, ParamDist, TypeDistribution};
use crate::env::{ConnectivityConfig, EnvConfig, TrendConfig};
use crate::rl::{EvalConfig, LpControl, OptimizerKind, TrainerConfig, TrainingConfig};

pub const PRESETS: &[&str] = &["diversity", "connectivity", "risk-aversion", "toy-trend"];

/// Built-in experiment by name.
pub fn preset(name: &str) -> Option<ExperimentSpec> {
    match name {
        "diversity" => Some(diversity()),
        "connectivity" => Some(connectivity()),
        "risk-aversion" => Some(risk_aversion()),
        "toy-trend" => Some(toy_trend()),
        _ => None,
    }
}

fn uniform(lo: f64, hi: f64) -> ParamDist {
    ParamDist::Uniform { uniform: [lo, hi] }
}

/// 3 LPs against 12 flow LTs with random targets; PnL LTs are added per
/// sweep point. The mid reverts toward its opening level so agents cannot
/// profit from marking inventory after pushing the book.
fn market_env() -> EnvConfig {
    EnvConfig {
        n_lp: 3,
        n_lt_flow: 12,
        n_lt_pnl: 0,
        episode_len: 64,
        mid_reversion: 0.3,
        lp_types: TypeDistribution::lp(uniform(0.0, 1.0), ParamDist::Fixed(0.0), uniform(0.0, 0.5)),
        lt_flow_types: TypeDistribution {
            w: ParamDist::Fixed(0.0),
            alpha: ParamDist::Fixed(1.0),
            gamma: ParamDist::Fixed(0.0),
            market_share_target: None,
            flow_targets: Some(FlowTargetDist {
                sell: uniform(0.0, 1.0),
                buy: uniform(0.0, 1.0),
                hold: uniform(0.0, 1.0),
            }),
        },
        lt_pnl_types: TypeDistribution::lt(ParamDist::Fixed(1.0), ParamDist::Fixed(0.0), 0.5, 0.5),
        ..Default::default()
    }
}

fn market_trainer() -> TrainerConfig {
    TrainerConfig {
        hidden: vec![32, 32],
        epochs: 2,
        learning_rate: 1e-3,
        optimizer: OptimizerKind::Adam,
        ..Default::default()
    }
}

fn market_training() -> TrainingConfig {
    TrainingConfig {
        iterations: 60,
        rollout_episodes: 8,
        lp: market_trainer(),
        lt: market_trainer(),
        ..Default::default()
    }
}

fn market_eval() -> EvalConfig {
    EvalConfig {
        episodes: 10,
        ..Default::default()
    }
}

fn fmt_key(prefix: &str, x: f64) -> String {
    format!("{prefix}={x}")
}

fn spec(name: &str, sweep: Vec<SweepPoint>, training: TrainingConfig, eval: EvalConfig) -> ExperimentSpec {
    ExperimentSpec {
        name: name.to_string(),
        sweep,
        train_env: None,
        training,
        eval,
        seeds: vec![0, 1, 2],
        histogram_bins: 30,
        flow_bucket_width: 0.05,
    }
}

fn diversity() -> ExperimentSpec {
    let sweep = [0usize, 2, 4, 8, 12]
        .into_iter()
        .map(|n| SweepPoint {
            key: format!("n_lt_pnl={n}"),
            env: EnvConfig {
                n_lt_pnl: n,
                ..market_env()
            },
        })
        .collect();
    spec("diversity", sweep, market_training(), market_eval())
}

const CONNECT_PROBS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

/// Flow LTs see each LP with probability p; PnL LTs stay fully connected.
/// One model per seed is trained over all p and evaluated at each.
fn connectivity() -> ExperimentSpec {
    let env_at = |lp_lt: ParamDist| {
        let mut env = EnvConfig {
            n_lt_pnl: 2,
            connectivity: ConnectivityConfig {
                lp_lt,
                lt_ecn: 1.0,
                pnl_lt_lp: Some(1.0),
            },
            ..market_env()
        };
        env.lp_types.gamma = ParamDist::Fixed(0.5);
        env.lt_pnl_types.w = ParamDist::Fixed(0.75);
        env
    };
    let sweep = CONNECT_PROBS
        .into_iter()
        .map(|p| SweepPoint {
            key: fmt_key("p", p),
            env: env_at(ParamDist::Fixed(p)),
        })
        .collect();
    let mut s = spec(
        "connectivity",
        sweep,
        market_training(),
        EvalConfig {
            episodes: 20,
            ..Default::default()
        },
    );
    s.train_env = Some(env_at(ParamDist::Choice {
        choice: CONNECT_PROBS.to_vec(),
    }));
    s
}

fn risk_aversion() -> ExperimentSpec {
    let sweep = [0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9]
        .into_iter()
        .map(|g| {
            let mut env = EnvConfig {
                n_lt_pnl: 2,
                ..market_env()
            };
            env.lp_types.gamma = ParamDist::Fixed(g);
            SweepPoint {
                key: fmt_key("gamma", g),
                env,
            }
        })
        .collect();
    spec("risk-aversion", sweep, market_training(), market_eval())
}

/// One fixed LP quoting the ECN spread and one LT on a sinusoidal mid.
fn toy_trend() -> ExperimentSpec {
    let sweep = [0.0, 0.25, 0.75, 1.0]
        .into_iter()
        .map(|w| SweepPoint {
            key: fmt_key("w", w),
            env: EnvConfig {
                n_lp: 1,
                n_lt_flow: 1,
                n_lt_pnl: 0,
                episode_len: 64,
                lp_types: TypeDistribution::lp(ParamDist::Fixed(0.0), ParamDist::Fixed(0.0), ParamDist::Fixed(0.0)),
                lt_flow_types: TypeDistribution::lt(ParamDist::Fixed(w), ParamDist::Fixed(0.0), 0.25, 0.75)
                    .with_alpha(0.05),
                trend: TrendConfig {
                    amplitude: 0.5,
                    period: 0,
                    phase: 0.0,
                },
                ..Default::default()
            },
        })
        .collect();
    let mut training = TrainingConfig {
        iterations: 60,
        rollout_episodes: 16,
        lp_control: LpControl::Fixed(LpAction::default()),
        ..Default::default()
    };
    training.lt.learning_rate = 0.1;
    let mut s = spec(
        "toy-trend",
        sweep,
        training,
        EvalConfig {
            episodes: 100,
            ..Default::default()
        },
    );
    s.seeds = vec![0, 1, 2, 3, 4];
    s
}
