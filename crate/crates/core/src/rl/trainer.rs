use std::sync::Arc;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, RngState};
use super::gae::gae;
use super::mlp::Mlp;
use super::policy::{CategoricalPolicy, GaussianPolicy};
use super::ppo::{ppo_update, Actions, Batch, Optimizers, Policy, TrainerConfig, UpdateStats};
use super::rollout::{derive_seed, run_episode, ActMode, Actors, EpisodeRecord, LpControl, Trajectory};
use super::RlError;
use crate::agents::Family;
use crate::ecn::EcnEngine;
use crate::env::EnvConfig;
use crate::Result;

/// Which families update in a given iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Schedule {
    /// Both families update every iteration.
    #[default]
    Simultaneous,
    /// Blocks of `period` iterations where only one family updates, LPs
    /// first.
    Alternating { period: usize },
}

impl Schedule {
    fn updates(&self, iteration: usize, family: Family) -> bool {
        match *self {
            Schedule::Simultaneous => true,
            Schedule::Alternating { period } => {
                let lp_turn = (iteration / period.max(1)) % 2 == 0;
                lp_turn == (family == Family::Lp)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub iterations: usize,
    /// Episodes collected (in parallel) per iteration.
    pub rollout_episodes: usize,
    pub lp: TrainerConfig,
    pub lt: TrainerConfig,
    pub schedule: Schedule,
    pub lp_control: LpControl,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            iterations: 50,
            rollout_episodes: 8,
            lp: TrainerConfig::default(),
            lt: TrainerConfig::default(),
            schedule: Schedule::Simultaneous,
            lp_control: LpControl::Learned,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        self.lp.validate()?;
        self.lt.validate()?;
        if self.rollout_episodes == 0 {
            return Err(RlError::Config("rollout_episodes must be positive".into()));
        }
        if let Schedule::Alternating { period: 0 } = self.schedule {
            return Err(RlError::Config("alternating period must be positive".into()));
        }
        Ok(())
    }
}

/// Policy and value network of one family plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyModel {
    pub policy: Policy,
    pub value: Mlp,
    pub opt: Optimizers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub lp: FamilyModel,
    pub lt: FamilyModel,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

impl Models {
    pub fn init(env: &EnvConfig, lp: &TrainerConfig, lt: &TrainerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let lp_net = Mlp::new(&sizes(env.lp_obs_dim(), &lp.hidden, 3), 0.01, &mut rng);
        let lp_value = Mlp::new(&sizes(env.lp_obs_dim(), &lp.hidden, 1), 1.0, &mut rng);
        let lt_net = Mlp::new(&sizes(env.lt_obs_dim(), &lt.hidden, 3), 0.01, &mut rng);
        let lt_value = Mlp::new(&sizes(env.lt_obs_dim(), &lt.hidden, 1), 1.0, &mut rng);
        let bounds = env.bounds.as_array().to_vec();
        Models {
            lp: FamilyModel {
                policy: Policy::Gaussian(GaussianPolicy::new(lp_net, lp.init_log_std, bounds)),
                value: lp_value,
                opt: Optimizers::default(),
            },
            lt: FamilyModel {
                policy: Policy::Categorical(CategoricalPolicy::new(lt_net)),
                value: lt_value,
                opt: Optimizers::default(),
            },
        }
    }

    pub fn lp_policy(&self) -> &GaussianPolicy {
        match &self.lp.policy {
            Policy::Gaussian(p) => p,
            Policy::Categorical(_) => unreachable!("LP head is Gaussian"),
        }
    }

    pub fn lt_policy(&self) -> &CategoricalPolicy {
        match &self.lt.policy {
            Policy::Categorical(p) => p,
            Policy::Gaussian(_) => unreachable!("LT head is categorical"),
        }
    }

    pub fn actors(&self, lp_control: LpControl) -> Actors<'_> {
        Actors {
            lp: self.lp_policy(),
            lp_value: &self.lp.value,
            lt: self.lt_policy(),
            lt_value: &self.lt.value,
            lp_control,
        }
    }

    /// Checks the networks against an environment's observation sizes.
    pub fn check_dims(&self, env: &EnvConfig) -> Result<()> {
        let check = |fam: &str, got: usize, want: usize| {
            if got != want {
                Err(crate::Error::Schema(format!(
                    "{fam} checkpoint expects {got} observation features, environment produces {want}"
                )))
            } else {
                Ok(())
            }
        };
        check("lp", self.lp.policy.net().input_dim(), env.lp_obs_dim())?;
        check("lt", self.lt.policy.net().input_dim(), env.lt_obs_dim())?;
        check("lp value", self.lp.value.input_dim(), env.lp_obs_dim())?;
        check("lt value", self.lt.value.input_dim(), env.lt_obs_dim())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub lp_mean_episode_reward: f64,
    pub lt_mean_episode_reward: f64,
    pub lp_update: Option<UpdateStats>,
    pub lt_update: Option<UpdateStats>,
}

fn family_batch(trajs: &[&Trajectory], cfg: &TrainerConfig) -> Result<Batch, RlError> {
    let mut obs = Vec::new();
    let mut cont = Vec::new();
    let mut disc = Vec::new();
    let mut log_probs = Vec::new();
    let mut advantages = Vec::new();
    let mut returns = Vec::new();
    for tr in trajs {
        let rewards: Vec<f64> = tr.rewards.iter().map(|r| r * cfg.reward_scale).collect();
        let mut dones = vec![false; rewards.len()];
        if let Some(d) = dones.last_mut() {
            *d = true;
        }
        let (adv, ret) = gae(&rewards, &tr.values, &dones, cfg.gamma, cfg.lambda)?;
        advantages.extend(adv);
        returns.extend(ret);
        obs.extend(tr.obs.iter().cloned());
        log_probs.extend(&tr.log_probs);
        match &tr.actions {
            Actions::Continuous(a) => cont.extend(a.iter().cloned()),
            Actions::Discrete(a) => disc.extend(a),
        }
    }
    let actions = if cont.is_empty() {
        Actions::Discrete(disc)
    } else {
        Actions::Continuous(cont)
    };
    let mut batch = Batch {
        obs,
        actions,
        log_probs,
        advantages,
        returns,
    };
    batch.normalize_advantages();
    Ok(batch)
}

/// Alternating collect/update loop over both families.
pub struct Trainer {
    pub env: EnvConfig,
    pub cfg: TrainingConfig,
    pub models: Models,
    pub iteration: usize,
    engine: Arc<EcnEngine>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(env: EnvConfig, engine: Arc<EcnEngine>, cfg: TrainingConfig, seed: u64) -> Result<Self> {
        env.validate()?;
        cfg.validate()?;
        let models = Models::init(&env, &cfg.lp, &cfg.lt, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(4);
        Ok(Trainer {
            env,
            cfg,
            models,
            iteration: 0,
            engine,
            seed,
            rng,
        })
    }

    /// Resumes from the two family checkpoints. The trainer RNG and the
    /// iteration counter come from the LP checkpoint.
    pub fn resume(
        env: EnvConfig,
        engine: Arc<EcnEngine>,
        cfg: TrainingConfig,
        lp: &Checkpoint,
        lt: &Checkpoint,
    ) -> Result<Self> {
        env.validate()?;
        cfg.validate()?;
        if lp.family != Family::Lp || lt.family != Family::Lt {
            return Err(crate::Error::Schema("checkpoint families must be lp and lt".into()));
        }
        let models = Models {
            lp: lp.to_family_model()?,
            lt: lt.to_family_model()?,
        };
        models.check_dims(&env)?;
        Ok(Trainer {
            env,
            cfg,
            models,
            iteration: lp.iteration,
            engine,
            seed: lp.seed,
            rng: lp.rng_state.restore(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn engine(&self) -> &Arc<EcnEngine> {
        &self.engine
    }

    /// Collects `rollout_episodes` episodes in parallel; results are ordered
    /// by episode index.
    pub fn collect(&self) -> Result<Vec<EpisodeRecord>> {
        let actors = self.models.actors(self.cfg.lp_control);
        (0..self.cfg.rollout_episodes)
            .into_par_iter()
            .map(|k| {
                let seed = derive_seed(self.seed, self.iteration as u64, k as u64);
                run_episode(&self.env, &self.engine, actors, seed, ActMode::TRAIN, false)
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<IterationLog> {
        let episodes = self.collect()?;
        let mean = |v: Vec<f64>| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let mut log = IterationLog {
            iteration: self.iteration,
            lp_mean_episode_reward: mean(episodes.iter().flat_map(|e| e.lp_returns.clone()).collect()),
            lt_mean_episode_reward: mean(episodes.iter().flat_map(|e| e.lt_returns.clone()).collect()),
            ..Default::default()
        };
        let lp_trajs: Vec<&Trajectory> = episodes.iter().flat_map(|e| &e.lp_traj).collect();
        if !lp_trajs.is_empty() && self.cfg.schedule.updates(self.iteration, Family::Lp) {
            let batch = family_batch(&lp_trajs, &self.cfg.lp)?;
            let m = &mut self.models.lp;
            log.lp_update = Some(ppo_update(&mut m.policy, &mut m.value, &mut m.opt, &batch, &self.cfg.lp, &mut self.rng)?);
        }
        let lt_trajs: Vec<&Trajectory> = episodes.iter().flat_map(|e| &e.lt_traj).collect();
        if !lt_trajs.is_empty() && self.cfg.schedule.updates(self.iteration, Family::Lt) {
            let batch = family_batch(&lt_trajs, &self.cfg.lt)?;
            let m = &mut self.models.lt;
            log.lt_update = Some(ppo_update(&mut m.policy, &mut m.value, &mut m.opt, &batch, &self.cfg.lt, &mut self.rng)?);
        }
        debug!(
            "iteration {}: lp reward {:.5}, lt reward {:.5}",
            log.iteration, log.lp_mean_episode_reward, log.lt_mean_episode_reward
        );
        self.iteration += 1;
        Ok(log)
    }

    /// Runs `iterations` more collect/update rounds.
    pub fn run(&mut self, iterations: usize) -> Result<Vec<IterationLog>> {
        (0..iterations).map(|_| self.step()).collect()
    }

    pub fn checkpoint(&self, family: Family) -> Checkpoint {
        let (model, cfg) = match family {
            Family::Lp => (&self.models.lp, &self.cfg.lp),
            Family::Lt => (&self.models.lt, &self.cfg.lt),
        };
        Checkpoint::from_model(
            family,
            model,
            cfg.clone(),
            RngState::capture(&self.rng),
            self.iteration,
            self.seed,
        )
    }
}

/// Evaluation settings for frozen policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes: usize,
    /// LPs quote their mean action.
    pub lp_deterministic: bool,
    pub lt_deterministic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 20,
            lp_deterministic: true,
            lt_deterministic: false,
        }
    }
}

/// Plays `cfg.episodes` episodes with frozen policies, in parallel, and
/// returns them in episode order with full step records.
pub fn evaluate(
    env: &EnvConfig,
    engine: &Arc<EcnEngine>,
    models: &Models,
    lp_control: LpControl,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    models.check_dims(env)?;
    let actors = models.actors(lp_control);
    let mode = ActMode {
        lp_deterministic: cfg.lp_deterministic,
        lt_deterministic: cfg.lt_deterministic,
        collect: false,
    };
    (0..cfg.episodes)
        .into_par_iter()
        .map(|k| {
            let s = derive_seed(seed, u64::MAX, k as u64);
            run_episode(env, engine, actors, s, mode, true)
        })
        .collect()
}
