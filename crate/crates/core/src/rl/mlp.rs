//! Fully connected network with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat vector: for each layer the weight matrix
//! (row-major, `out x in`) followed by its bias.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Post-activation outputs of every layer, input first.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Dot product with four independent accumulators so it vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, ar) = a.split_at(a.len() - a.len() % 4);
    let (bc, br) = b.split_at(ac.len());
    for (x, y) in ac.chunks_exact(4).zip(bc.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        Mlp {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        }
    }

    /// Gaussian init scaled by `1/sqrt(fan_in)`; the output layer is further
    /// scaled by `out_scale`. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], out_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(layer_sizes);
        let n_layers = layer_sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (i, o) = (layer_sizes[l], layer_sizes[l + 1]);
            let scale = (1.0 / i as f64).sqrt() * if l + 1 == n_layers { out_scale } else { 1.0 };
            for w in &mut net.params[off..off + i * o] {
                let z: f64 = StandardNormal.sample(rng);
                *w = z * scale;
            }
            off += i * o + o;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(RlError::Shape(format!("bad layer sizes {:?}", self.layer_sizes)));
        }
        let n = param_count(&self.layer_sizes);
        if self.params.len() != n {
            return Err(RlError::Shape(format!(
                "expected {n} parameters, got {}",
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(RlError::NonFinite("network parameters".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), RlError> {
        if x.len() != self.input_dim() {
            return Err(RlError::Shape(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, RlError> {
        self.check_input(x)?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut cur = x.to_vec();
        let mut off = 0;
        for l in 0..n_layers {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let next = self.affine(off, i, o, &cur, l + 1 < n_layers);
            off += i * o + o;
            cur = next;
        }
        Ok(cur)
    }

    fn affine(&self, off: usize, i: usize, o: usize, x: &[f64], hidden: bool) -> Vec<f64> {
        let w = &self.params[off..off + i * o];
        let b = &self.params[off + i * o..off + i * o + o];
        (0..o)
            .map(|r| {
                let row = &w[r * i..(r + 1) * i];
                let z = b[r] + dot(row, x);
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Forward pass keeping every layer's activations for [`Mlp::backward`].
    pub fn forward_cached(&self, x: &[f64]) -> Result<MlpCache, RlError> {
        self.check_input(x)?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let next = self.affine(off, i, o, &acts[l], l + 1 < n_layers);
            off += i * o + o;
            acts.push(next);
        }
        Ok(MlpCache { acts })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`
    /// and returns `d loss / d input`.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if l + 1 < n_layers {
                // through tanh: d/dz = 1 - a^2
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let off = offsets[l];
            let x = &cache.acts[l];
            let w = &self.params[off..off + i * o];
            let mut dx = vec![0.0; i];
            {
                let (gw, gb) = grad[off..off + i * o + o].split_at_mut(i * o);
                for r in 0..o {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    gb[r] += d;
                    let grow = &mut gw[r * i..(r + 1) * i];
                    let wrow = &w[r * i..(r + 1) * i];
                    for ((g, xc), (dxc, wc)) in grow.iter_mut().zip(x).zip(dx.iter_mut().zip(wrow)) {
                        *g += d * xc;
                        *dxc += d * wc;
                    }
                }
            }
            delta = dx;
        }
        delta
    }
}
