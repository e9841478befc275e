use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::policy::{CategoricalPolicy, GaussianPolicy};
use super::ppo::{Optimizers, Policy, TrainerConfig};
use super::trainer::FamilyModel;
use crate::agents::Family;
use crate::{Error, Result};

/// Exact position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// One family's trained state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub family: Family,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<f64>,
    pub log_std: Option<Vec<f64>>,
    /// Action bounds of the squashed Gaussian head (LP only).
    pub bounds: Option<Vec<[f64; 2]>>,
    pub value_layer_sizes: Vec<usize>,
    pub value_weights: Vec<f64>,
    pub optimizer: Optimizers,
    pub trainer_config: TrainerConfig,
    pub rng_state: RngState,
    pub iteration: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(
        family: Family,
        model: &FamilyModel,
        trainer_config: TrainerConfig,
        rng_state: RngState,
        iteration: usize,
        seed: u64,
    ) -> Self {
        let (net, log_std, bounds) = match &model.policy {
            Policy::Gaussian(p) => (&p.net, Some(p.log_std.clone()), Some(p.bounds.clone())),
            Policy::Categorical(p) => (&p.net, None, None),
        };
        Checkpoint {
            family,
            layer_sizes: net.layer_sizes.clone(),
            weights: net.params.clone(),
            log_std,
            bounds,
            value_layer_sizes: model.value.layer_sizes.clone(),
            value_weights: model.value.params.clone(),
            optimizer: model.opt.clone(),
            trainer_config,
            rng_state,
            iteration,
            seed,
        }
    }

    pub fn to_family_model(&self) -> Result<FamilyModel> {
        let net = Mlp {
            layer_sizes: self.layer_sizes.clone(),
            params: self.weights.clone(),
        };
        let value = Mlp {
            layer_sizes: self.value_layer_sizes.clone(),
            params: self.value_weights.clone(),
        };
        net.validate()?;
        value.validate()?;
        let policy = match (self.family, &self.log_std, &self.bounds) {
            (Family::Lp, Some(ls), Some(b)) if ls.len() == net.output_dim() && b.len() == ls.len() => {
                Policy::Gaussian(GaussianPolicy {
                    net,
                    log_std: ls.clone(),
                    bounds: b.clone(),
                })
            }
            (Family::Lt, None, None) if net.output_dim() == 3 => {
                Policy::Categorical(CategoricalPolicy::new(net))
            }
            _ => {
                return Err(Error::Schema(format!(
                    "{} checkpoint has an inconsistent policy head",
                    self.family
                )))
            }
        };
        Ok(FamilyModel {
            policy,
            value,
            opt: self.optimizer.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
