//! Clipped-surrogate PPO update for either policy head.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::policy::{CategoricalPolicy, GaussianPolicy};
use super::RlError;

const LOG_STD_RANGE: [f64; 2] = [-4.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    /// Discount factor.
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Multiplies rewards before advantage estimation (learning only).
    pub reward_scale: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch_size: 256,
            learning_rate: 0.01,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            reward_scale: 1.0,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = unit(self.gamma)
            && unit(self.lambda)
            && self.clip > 0.0
            && self.epochs > 0
            && self.minibatch_size > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.max_grad_norm > 0.0
            && self.entropy_coef >= 0.0
            && self.value_coef >= 0.0
            && self.reward_scale > 0.0
            && !self.hidden.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(RlError::Config(format!("invalid trainer config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Actions {
    /// Raw (pre-squash) Gaussian draws.
    Continuous(Vec<Vec<f64>>),
    Discrete(Vec<usize>),
}

impl Actions {
    pub fn len(&self) -> usize {
        match self {
            Actions::Continuous(v) => v.len(),
            Actions::Discrete(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Actions,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn validate(&self) -> Result<(), RlError> {
        let n = self.obs.len();
        if self.actions.len() != n
            || self.log_probs.len() != n
            || self.advantages.len() != n
            || self.returns.len() != n
        {
            return Err(RlError::Shape("batch columns differ in length".into()));
        }
        Ok(())
    }

    /// Shifts and scales advantages to zero mean and unit variance.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len();
        if n < 2 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n as f64;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt() + 1e-8;
        for a in &mut self.advantages {
            *a = (*a - mean) / sd;
        }
    }
}

/// Either policy head, as trained by [`ppo_update`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Policy {
    Gaussian(GaussianPolicy),
    Categorical(CategoricalPolicy),
}

impl Policy {
    pub fn net(&self) -> &Mlp {
        match self {
            Policy::Gaussian(p) => &p.net,
            Policy::Categorical(p) => &p.net,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Policy::Gaussian(p) => p.n_params(),
            Policy::Categorical(p) => p.n_params(),
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        match self {
            Policy::Gaussian(p) => p.net.params.iter().chain(&p.log_std).copied().collect(),
            Policy::Categorical(p) => p.net.params.clone(),
        }
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        match self {
            Policy::Gaussian(p) => {
                let n = p.net.n_params();
                p.net.params.copy_from_slice(&flat[..n]);
                for (ls, v) in p.log_std.iter_mut().zip(&flat[n..]) {
                    *ls = v.clamp(LOG_STD_RANGE[0], LOG_STD_RANGE[1]);
                }
            }
            Policy::Categorical(p) => p.net.params.copy_from_slice(flat),
        }
    }

    /// `(log_prob, entropy)` of sample `i` and the gradient of
    /// `lp_coef * log_prob + ent_coef * entropy` accumulated into `grad`.
    fn sample_grad(
        &self,
        obs: &[f64],
        actions: &Actions,
        i: usize,
        lp_coef: impl FnOnce(f64) -> f64,
        ent_coef: f64,
        grad: &mut [f64],
    ) -> Result<(f64, f64), RlError> {
        match (self, actions) {
            (Policy::Gaussian(p), Actions::Continuous(a)) => {
                let (cache, lp) = p.log_prob_cached(obs, &a[i])?;
                let c = lp_coef(lp);
                p.accumulate_log_prob_grad(&cache, &a[i], c, grad);
                p.accumulate_entropy_grad(ent_coef, grad);
                Ok((lp, p.entropy()))
            }
            (Policy::Categorical(p), Actions::Discrete(a)) => {
                let (cache, lp, h) = p.evaluate_cached(obs, a[i])?;
                let c = lp_coef(lp);
                p.accumulate_grad(&cache, a[i], c, ent_coef, grad);
                Ok((lp, h))
            }
            _ => Err(RlError::Shape("action kind does not match policy head".into())),
        }
    }
}

/// Optimizer state carried across updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptState {
    fn step(&mut self, kind: OptimizerKind, lr: f64, params: &mut [f64], grad: &[f64]) {
        match kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                if self.m.len() != params.len() {
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                    self.t = 0;
                }
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t as i32);
                let c2 = 1.0 - B2.powi(self.t as i32);
                for k in 0..params.len() {
                    self.m[k] = B1 * self.m[k] + (1.0 - B1) * grad[k];
                    self.v[k] = B2 * self.v[k] + (1.0 - B2) * grad[k] * grad[k];
                    params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// Optimizer state for one family's policy and value networks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Optimizers {
    pub policy: OptState,
    pub value: OptState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub policy_grad_norm: f64,
    pub value_grad_norm: f64,
    pub minibatches: usize,
}

fn clip_norm(grad: &mut [f64], max: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max {
        let s = max / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// Runs `epochs` passes of shuffled minibatch updates. On a non-finite loss
/// or gradient the networks are restored and an error describing the
/// offending minibatch is returned.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Policy,
    value: &mut Mlp,
    opt: &mut Optimizers,
    batch: &Batch,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    batch.validate()?;
    if batch.is_empty() {
        return Err(RlError::Shape("empty batch".into()));
    }
    let saved = (policy.clone(), value.clone(), opt.clone());
    let result = run_epochs(policy, value, opt, batch, cfg, rng);
    if result.is_err() {
        (*policy, *value, *opt) = saved;
    }
    result
}

fn run_epochs<R: Rng + ?Sized>(
    policy: &mut Policy,
    value: &mut Mlp,
    opt: &mut Optimizers,
    batch: &Batch,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    let n = batch.len();
    let mb = cfg.minibatch_size.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut clipped = 0usize;
    let mut seen = 0usize;
    let mut pol_params = policy.flat_params();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(mb) {
            let m = chunk.len() as f64;
            let mut g_pol = vec![0.0; policy.n_params()];
            let mut g_val = vec![0.0; value.n_params()];
            let (mut pl, mut vl, mut ent, mut kl) = (0.0, 0.0, 0.0, 0.0);
            for &i in chunk {
                let adv = batch.advantages[i];
                let old = batch.log_probs[i];
                let lo = 1.0 - cfg.clip;
                let hi = 1.0 + cfg.clip;
                let mut surrogate = 0.0;
                let mut was_clipped = false;
                let (lp, h) = policy.sample_grad(
                    &batch.obs[i],
                    &batch.actions,
                    i,
                    |lp| {
                        let ratio = (lp - old).exp();
                        let unclipped = ratio * adv;
                        let clipped_obj = ratio.clamp(lo, hi) * adv;
                        surrogate = unclipped.min(clipped_obj);
                        was_clipped = (adv > 0.0 && ratio > hi) || (adv < 0.0 && ratio < lo);
                        if was_clipped {
                            0.0
                        } else {
                            // d(-ratio * adv)/dlogp
                            -unclipped / m
                        }
                    },
                    -cfg.entropy_coef / m,
                    &mut g_pol,
                )?;
                if was_clipped {
                    clipped += 1;
                }
                pl -= surrogate;
                ent += h;
                kl += old - lp;

                let cache = value.forward_cached(&batch.obs[i])?;
                let err = cache.output()[0] - batch.returns[i];
                vl += 0.5 * err * err;
                value.backward(&cache, &[cfg.value_coef * err / m], &mut g_val);
            }
            seen += chunk.len();
            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.entropy += ent;
            stats.approx_kl += kl;
            let gp = clip_norm(&mut g_pol, cfg.max_grad_norm);
            let gv = clip_norm(&mut g_val, cfg.max_grad_norm);
            if !(pl.is_finite() && vl.is_finite() && gp.is_finite() && gv.is_finite()) {
                return Err(RlError::NonFinite(format!(
                    "ppo minibatch: policy loss {pl}, value loss {vl}, grad norms {gp}/{gv}"
                )));
            }
            stats.policy_grad_norm = stats.policy_grad_norm.max(gp);
            stats.value_grad_norm = stats.value_grad_norm.max(gv);
            opt.policy.step(cfg.optimizer, cfg.learning_rate, &mut pol_params, &g_pol);
            policy.set_flat_params(&pol_params);
            pol_params = policy.flat_params();
            opt.value.step(cfg.optimizer, cfg.learning_rate, &mut value.params, &g_val);
            stats.minibatches += 1;
        }
    }
    let s = seen.max(1) as f64;
    stats.policy_loss /= s;
    stats.value_loss /= s;
    stats.entropy /= s;
    stats.approx_kl /= s;
    stats.clip_fraction = clipped as f64 / s;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_batch(pol: &GaussianPolicy, n: usize, rng: &mut ChaCha8Rng) -> Batch {
        let obs: Vec<Vec<f64>> = (0..n).map(|i| vec![1.0, (i % 5) as f64 * 0.1]).collect();
        let samples: Vec<_> = obs.iter().map(|o| pol.sample(o, rng).unwrap()).collect();
        Batch {
            advantages: samples.iter().map(|s| s.raw[0]).collect(),
            returns: vec![0.0; n],
            log_probs: samples.iter().map(|s| s.log_prob).collect(),
            actions: Actions::Continuous(samples.into_iter().map(|s| s.raw).collect()),
            obs,
        }
    }

    #[test]
    fn unchanged_policy_has_zero_clip_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pol = GaussianPolicy::new(Mlp::new(&[2, 8, 1], 0.1, &mut rng), 0.0, vec![[-1.0, 1.0]]);
        let batch = gaussian_batch(&pol, 64, &mut rng);
        let cfg = TrainerConfig {
            epochs: 1,
            minibatch_size: 64,
            ..Default::default()
        };
        let mut p = Policy::Gaussian(pol);
        let mut v = Mlp::zeros(&[2, 1]);
        let stats = ppo_update(&mut p, &mut v, &mut Optimizers::default(), &batch, &cfg, &mut rng).unwrap();
        assert_eq!(stats.clip_fraction, 0.0);
        assert!(stats.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn bandit_step_moves_mean_toward_reward() {
        // reward = raw action, so the mean should increase
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pol = GaussianPolicy::new(Mlp::zeros(&[2, 1]), 0.0, vec![[-1.0, 1.0]]);
        let batch = gaussian_batch(&pol, 256, &mut rng);
        let cfg = TrainerConfig {
            epochs: 1,
            minibatch_size: 256,
            learning_rate: 0.05,
            ..Default::default()
        };
        let mut p = Policy::Gaussian(pol);
        let mut v = Mlp::zeros(&[2, 1]);
        ppo_update(&mut p, &mut v, &mut Optimizers::default(), &batch, &cfg, &mut rng).unwrap();
        let Policy::Gaussian(g) = &p else { unreachable!() };
        assert!(g.mean(&[1.0, 0.0]).unwrap()[0] > 0.0);
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pol = CategoricalPolicy::new(Mlp::new(&[2, 4, 3], 1.0, &mut rng));
        let obs: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64 / 32.0, 1.0]).collect();
        let samples: Vec<_> = obs.iter().map(|o| pol.sample(o, &mut rng).unwrap()).collect();
        let batch = Batch {
            actions: Actions::Discrete(samples.iter().map(|s| s.index).collect()),
            log_probs: samples.iter().map(|s| s.log_prob).collect(),
            advantages: vec![0.0; 32],
            returns: vec![1.0; 32],
            obs,
        };
        let mut p = Policy::Categorical(pol.clone());
        let mut v = Mlp::zeros(&[2, 1]);
        let cfg = TrainerConfig::default();
        ppo_update(&mut p, &mut v, &mut Optimizers::default(), &batch, &cfg, &mut rng).unwrap();
        assert_eq!(p, Policy::Categorical(pol));
        assert!(v.forward(&[0.5, 1.0]).unwrap()[0] > 0.0, "value net should still learn");
    }

    #[test]
    fn non_finite_batch_restores_networks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pol = CategoricalPolicy::new(Mlp::new(&[1, 3], 1.0, &mut rng));
        let batch = Batch {
            obs: vec![vec![1.0]; 4],
            actions: Actions::Discrete(vec![0; 4]),
            log_probs: vec![-1.0; 4],
            advantages: vec![f64::NAN; 4],
            returns: vec![0.0; 4],
        };
        let mut p = Policy::Categorical(pol.clone());
        let mut v = Mlp::zeros(&[1, 1]);
        let cfg = TrainerConfig::default();
        let err = ppo_update(&mut p, &mut v, &mut Optimizers::default(), &batch, &cfg, &mut rng);
        assert!(matches!(err, Err(RlError::NonFinite(_))));
        assert_eq!(p, Policy::Categorical(pol));
    }

    #[test]
    fn adam_also_improves_bandit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pol = GaussianPolicy::new(Mlp::zeros(&[2, 1]), 0.0, vec![[-1.0, 1.0]]);
        let batch = gaussian_batch(&pol, 128, &mut rng);
        let cfg = TrainerConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let mut p = Policy::Gaussian(pol);
        let mut v = Mlp::zeros(&[2, 1]);
        ppo_update(&mut p, &mut v, &mut Optimizers::default(), &batch, &cfg, &mut rng).unwrap();
        let Policy::Gaussian(g) = &p else { unreachable!() };
        assert!(g.mean(&[1.0, 0.0]).unwrap()[0] > 0.0);
    }
}
