//! Playing whole episodes with the two family policies.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::policy::{lp_action, lt_choice, CategoricalPolicy, GaussianPolicy};
use super::ppo::Actions;
use super::RlError;
use crate::agents::{AgentType, LpAction, LtChoice};
use crate::ecn::EcnEngine;
use crate::env::{ConnectivityGraph, Env, EnvConfig, LtGroup, StepInfo};
use crate::Result;

/// splitmix64 finalizer over a combination of inputs.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How LPs pick actions during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpControl {
    #[default]
    Learned,
    /// Every LP plays this action; nothing is learned.
    Fixed(LpAction),
}

/// Action selection mode per family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActMode {
    pub lp_deterministic: bool,
    pub lt_deterministic: bool,
    /// Record values and transitions for learning.
    pub collect: bool,
}

impl ActMode {
    pub const TRAIN: ActMode = ActMode {
        lp_deterministic: false,
        lt_deterministic: false,
        collect: true,
    };
}

/// One agent's transitions in an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub obs: Vec<Vec<f64>>,
    pub actions: Actions,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Type parameters of the agent, constant over the episode.
    pub agent_type: AgentType,
}

impl Trajectory {
    fn new(continuous: bool, agent_type: AgentType) -> Self {
        Trajectory {
            obs: Vec::new(),
            actions: if continuous {
                Actions::Continuous(Vec::new())
            } else {
                Actions::Discrete(Vec::new())
            },
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            agent_type,
        }
    }

    pub fn episode_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Everything that happened in one episode.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub lp_types: Vec<AgentType>,
    pub lt_types: Vec<AgentType>,
    pub lt_groups: Vec<LtGroup>,
    pub graph: ConnectivityGraph,
    pub steps: Vec<StepInfo>,
    /// Filled only when collecting for learning.
    pub lp_traj: Vec<Trajectory>,
    pub lt_traj: Vec<Trajectory>,
    pub lp_returns: Vec<f64>,
    pub lt_returns: Vec<f64>,
}

/// Borrowed view of the networks needed to act.
#[derive(Clone, Copy)]
pub struct Actors<'a> {
    pub lp: &'a GaussianPolicy,
    pub lp_value: &'a Mlp,
    pub lt: &'a CategoricalPolicy,
    pub lt_value: &'a Mlp,
    pub lp_control: LpControl,
}

fn value_of(net: &Mlp, obs: &[f64]) -> std::result::Result<f64, RlError> {
    Ok(net.forward(obs)?[0])
}

/// Plays one episode from `seed`. The environment's own randomness and the
/// action sampling use independent streams derived from the seed.
pub fn run_episode(
    cfg: &EnvConfig,
    engine: &Arc<EcnEngine>,
    actors: Actors<'_>,
    seed: u64,
    mode: ActMode,
    keep_steps: bool,
) -> Result<EpisodeRecord> {
    let mut env = Env::new(cfg.clone(), engine.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut lp_obs = env.reset(seed)?;
    let n_lp = env.n_lp();
    let n_lt = env.n_lt();
    let learn_lp = mode.collect && actors.lp_control == LpControl::Learned;
    let mut lp_traj: Vec<Trajectory> = if learn_lp {
        env.lp_types().iter().map(|t| Trajectory::new(true, t.clone())).collect()
    } else {
        Vec::new()
    };
    let mut lt_traj: Vec<Trajectory> = if mode.collect {
        env.lt_types().iter().map(|t| Trajectory::new(false, t.clone())).collect()
    } else {
        Vec::new()
    };
    let mut lp_returns = vec![0.0; n_lp];
    let mut lt_returns = vec![0.0; n_lt];
    let mut steps = Vec::new();
    loop {
        let mut lp_actions = Vec::with_capacity(n_lp);
        for (i, o) in lp_obs.iter().enumerate() {
            let action = match actors.lp_control {
                LpControl::Fixed(a) => a,
                LpControl::Learned => {
                    let s = if mode.lp_deterministic {
                        actors.lp.deterministic(o)?
                    } else {
                        actors.lp.sample(o, &mut rng)?
                    };
                    if learn_lp {
                        let tr = &mut lp_traj[i];
                        tr.values.push(value_of(actors.lp_value, o)?);
                        tr.log_probs.push(s.log_prob);
                        if let Actions::Continuous(a) = &mut tr.actions {
                            a.push(s.raw.clone());
                        }
                    }
                    lp_action(&s.action)
                }
            };
            lp_actions.push(action);
        }
        if learn_lp {
            for (tr, o) in lp_traj.iter_mut().zip(lp_obs) {
                tr.obs.push(o);
            }
        }
        let lt_obs = env.quote(&lp_actions)?;
        let mut choices: Vec<LtChoice> = Vec::with_capacity(n_lt);
        for (j, o) in lt_obs.into_iter().enumerate() {
            let s = if mode.lt_deterministic {
                actors.lt.deterministic(&o)?
            } else {
                actors.lt.sample(&o, &mut rng)?
            };
            if mode.collect {
                let tr = &mut lt_traj[j];
                tr.values.push(value_of(actors.lt_value, &o)?);
                tr.log_probs.push(s.log_prob);
                if let Actions::Discrete(a) = &mut tr.actions {
                    a.push(s.index);
                }
                tr.obs.push(o);
            }
            choices.push(lt_choice(s.index));
        }
        let out = env.trade(&choices)?;
        for (i, r) in out.lp_rewards.iter().enumerate() {
            lp_returns[i] += r;
            if learn_lp {
                lp_traj[i].rewards.push(*r);
            }
        }
        for (j, r) in out.lt_rewards.iter().enumerate() {
            lt_returns[j] += r;
            if mode.collect {
                lt_traj[j].rewards.push(*r);
            }
        }
        if keep_steps {
            steps.push(out.info);
        }
        if out.done {
            break;
        }
        lp_obs = out.next_lp_obs;
    }
    Ok(EpisodeRecord {
        seed,
        lp_types: env.lp_types().to_vec(),
        lt_types: env.lt_types().to_vec(),
        lt_groups: env.lt_groups().to_vec(),
        graph: env.graph().clone(),
        steps,
        lp_traj,
        lt_traj,
        lp_returns,
        lt_returns,
    })
}
