//! Policy heads: a tanh-squashed diagonal Gaussian for LPs and a categorical
//! distribution for LTs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache};
use super::RlError;
use crate::agents::{LpAction, LtChoice};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Maps a raw Gaussian draw into `[lo, hi]` through tanh.
pub fn squash(u: f64, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * 0.5 * (u.tanh() + 1.0)
}

/// `log |d squash / du|`
pub fn squash_log_jacobian(u: f64, [lo, hi]: [f64; 2]) -> f64 {
    // 1 - tanh(u)^2 = 4 / (e^u + e^-u)^2, evaluated stably
    let a = u.abs();
    let log_sech2 = 2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p());
    (0.5 * (hi - lo)).ln() + log_sech2
}

/// Diagonal Gaussian over raw actions with a state-independent log-std,
/// squashed per dimension into `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
    pub bounds: Vec<[f64; 2]>,
}

/// One sampled (or deterministic) action with its raw pre-squash values.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    pub raw: Vec<f64>,
    pub action: Vec<f64>,
    /// Log-density of `raw` under the pre-squash Gaussian.
    pub log_prob: f64,
}

impl GaussianPolicy {
    pub fn new(net: Mlp, log_std: f64, bounds: Vec<[f64; 2]>) -> Self {
        let d = net.output_dim();
        assert_eq!(d, bounds.len());
        GaussianPolicy {
            net,
            log_std: vec![log_std; d],
            bounds,
        }
    }

    pub fn dim(&self) -> usize {
        self.log_std.len()
    }

    /// Number of trainable parameters: network plus log-std.
    pub fn n_params(&self) -> usize {
        self.net.n_params() + self.dim()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        self.net.forward(obs)
    }

    pub fn squash_all(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.bounds).map(|(u, b)| squash(*u, *b)).collect()
    }

    /// Log-density of raw `u` given mean `mu`.
    pub fn raw_log_prob(&self, mu: &[f64], u: &[f64]) -> f64 {
        mu.iter()
            .zip(u)
            .zip(&self.log_std)
            .map(|((m, x), ls)| {
                let z = (x - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * LN_2PI
            })
            .sum()
    }

    /// Log-density of the squashed action, including the change of
    /// variables.
    pub fn squashed_log_prob(&self, mu: &[f64], u: &[f64]) -> f64 {
        let jac: f64 = u
            .iter()
            .zip(&self.bounds)
            .map(|(x, b)| squash_log_jacobian(*x, *b))
            .sum();
        self.raw_log_prob(mu, u) - jac
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<GaussianSample, RlError> {
        let mu = self.mean(obs)?;
        let raw: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect();
        Ok(GaussianSample {
            log_prob: self.raw_log_prob(&mu, &raw),
            action: self.squash_all(&raw),
            raw,
        })
    }

    /// Squashed mean action.
    pub fn deterministic(&self, obs: &[f64]) -> Result<GaussianSample, RlError> {
        let mu = self.mean(obs)?;
        Ok(GaussianSample {
            log_prob: self.raw_log_prob(&mu, &mu),
            action: self.squash_all(&mu),
            raw: mu,
        })
    }

    /// Forward pass returning the cache and the raw log-prob of `u`.
    pub fn log_prob_cached(&self, obs: &[f64], u: &[f64]) -> Result<(MlpCache, f64), RlError> {
        let cache = self.net.forward_cached(obs)?;
        let lp = self.raw_log_prob(cache.output(), u);
        Ok((cache, lp))
    }

    /// Accumulates the gradient of `coef * log_prob(u)` into `grad`
    /// (network parameters first, log-std last).
    pub fn accumulate_log_prob_grad(&self, cache: &MlpCache, u: &[f64], coef: f64, grad: &mut [f64]) {
        let n = self.net.n_params();
        let mu = cache.output();
        let mut d_mu = vec![0.0; self.dim()];
        for k in 0..self.dim() {
            let var = (2.0 * self.log_std[k]).exp();
            let diff = u[k] - mu[k];
            d_mu[k] = coef * diff / var;
            grad[n + k] += coef * (diff * diff / var - 1.0);
        }
        let (g_net, _) = grad.split_at_mut(n);
        self.net.backward(cache, &d_mu, g_net);
    }

    /// Accumulates `coef * d entropy / d params` (only log-std matters).
    pub fn accumulate_entropy_grad(&self, coef: f64, grad: &mut [f64]) {
        let n = self.net.n_params();
        for g in &mut grad[n..n + self.dim()] {
            *g += coef;
        }
    }

    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.net.params, &mut self.log_std)
    }
}

/// Converts a squashed 3-vector into an LP action.
pub fn lp_action(a: &[f64]) -> LpAction {
    LpAction::new(a[0], a[1], a[2])
}

/// Categorical distribution over logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalPolicy {
    pub net: Mlp,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoricalSample {
    pub index: usize,
    pub log_prob: f64,
}

impl CategoricalPolicy {
    pub fn new(net: Mlp) -> Self {
        CategoricalPolicy { net }
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    pub fn probs(&self, obs: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(softmax(&self.net.forward(obs)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<CategoricalSample, RlError> {
        let logits = self.net.forward(obs)?;
        let lp = log_softmax(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut index = lp.len() - 1;
        for (k, l) in lp.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                index = k;
                break;
            }
        }
        Ok(CategoricalSample {
            index,
            log_prob: lp[index],
        })
    }

    /// Most likely action (lowest index on ties).
    pub fn deterministic(&self, obs: &[f64]) -> Result<CategoricalSample, RlError> {
        let lp = log_softmax(&self.net.forward(obs)?);
        let mut index = 0;
        for k in 1..lp.len() {
            if lp[k] > lp[index] {
                index = k;
            }
        }
        Ok(CategoricalSample {
            index,
            log_prob: lp[index],
        })
    }

    /// `(cache, log_prob(action), entropy)`
    pub fn evaluate_cached(&self, obs: &[f64], action: usize) -> Result<(MlpCache, f64, f64), RlError> {
        let cache = self.net.forward_cached(obs)?;
        let lp = log_softmax(cache.output());
        let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        Ok((cache, lp[action], h))
    }

    /// Accumulates `lp_coef * d log_prob(action) + ent_coef * d entropy`.
    pub fn accumulate_grad(&self, cache: &MlpCache, action: usize, lp_coef: f64, ent_coef: f64, grad: &mut [f64]) {
        let lp = log_softmax(cache.output());
        let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let h = -p.iter().zip(&lp).map(|(a, b)| a * b).sum::<f64>();
        let d_logits: Vec<f64> = (0..p.len())
            .map(|k| {
                let onehot = if k == action { 1.0 } else { 0.0 };
                lp_coef * (onehot - p[k]) - ent_coef * p[k] * (lp[k] + h)
            })
            .collect();
        self.net.backward(cache, &d_logits, grad);
    }
}

pub fn lt_choice(index: usize) -> LtChoice {
    LtChoice::from_index(index).expect("policy head has three outputs")
}
