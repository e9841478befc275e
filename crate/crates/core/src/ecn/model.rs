//! Statistical ECN: three Gaussian mixtures drive the order book.
//!
//! * `init` samples the initial top-of-book volume snapshot,
//! * `delta` is a joint mixture over `(current volumes, volume change)` and is
//!   sampled conditionally on the current snapshot,
//! * `decomp` is a one-dimensional mixture of child order sizes used to split
//!   each level's change into several orders.
//!
//! Snapshot levels are anchored on the mid: with the mid at `m` ticks, bid
//! level `k` sits at `ceil(m) - k` and ask level `k` at `floor(m) + k`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::book::{OrderBook, QTY_EPS};
use super::mixture::{ConditionalSampler, GaussianMixture, MixtureError, MixtureSampler};
use crate::market::{Counterparty, Side};

/// Resampling attempts before a snapshot model is declared degenerate.
pub const SAMPLE_RETRY_CAP: usize = 100;
const MAX_CHILD_ORDERS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookSnapshot {
    pub mid: f64,
    pub bid_volumes: Vec<f64>,
    pub ask_volumes: Vec<f64>,
}

impl BookSnapshot {
    /// `[bid_1..bid_n, ask_1..ask_n]`
    pub fn to_vector(&self) -> Vec<f64> {
        self.bid_volumes
            .iter()
            .chain(&self.ask_volumes)
            .copied()
            .collect()
    }

    pub fn levels(&self) -> usize {
        self.bid_volumes.len()
    }
}

/// Tick of snapshot level `level` (1-based) for a mid of `mid_ticks2 / 2`.
pub fn level_tick(side: Side, level: usize, mid_ticks2: i64) -> i64 {
    let k = level as i64;
    match side {
        Side::Buy => (mid_ticks2 + 1).div_euclid(2) - k,
        Side::Sell => mid_ticks2.div_euclid(2) + k,
    }
}

pub fn snapshot(book: &OrderBook, n: usize, mid_ticks2: i64) -> BookSnapshot {
    let vols = |side| {
        (1..=n)
            .map(|k| book.volume_at_tick(side, level_tick(side, k, mid_ticks2)))
            .collect()
    };
    BookSnapshot {
        mid: mid_ticks2 as f64 * 0.5 * book.tick_size(),
        bid_volumes: vols(Side::Buy),
        ask_volumes: vols(Side::Sell),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderAction {
    Limit,
    Cancel,
}

/// An order applied to the book by the evolution model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedOrder {
    pub action: OrderAction,
    pub side: Side,
    pub price: f64,
    pub qty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcnModel {
    /// Levels per side.
    pub n: usize,
    /// Steps between two evolutions of the book.
    pub dt: usize,
    pub tick_size: f64,
    pub initial_mid: f64,
    /// Volume changes smaller than this are ignored; also the smallest child order.
    pub min_order_size: f64,
    pub init: GaussianMixture,
    pub delta: GaussianMixture,
    pub decomp: GaussianMixture,
}

/// Parameters of the ground-truth volume process behind [`EcnModel::reference`]
/// and the synthetic L2 generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeProcess {
    pub n: usize,
    pub tick_size: f64,
    pub initial_mid: f64,
    /// Mean volume at level 1; deeper levels add `volume_slope` each.
    pub base_volume: f64,
    pub volume_slope: f64,
    /// Fraction of the gap to the mean volume closed per step.
    pub volume_reversion: f64,
    /// Per-step volume noise standard deviation.
    pub volume_noise: f64,
    /// Typical child order size.
    pub order_size: f64,
}

impl Default for VolumeProcess {
    fn default() -> Self {
        VolumeProcess {
            n: 5,
            tick_size: 0.01,
            initial_mid: 100.0,
            base_volume: 2.0,
            volume_slope: 2.0,
            volume_reversion: 0.3,
            volume_noise: 1.5,
            order_size: 1.0,
        }
    }
}

impl VolumeProcess {
    pub fn mean_volume(&self, level: usize) -> f64 {
        self.base_volume + self.volume_slope * (level as f64 - 1.0)
    }
}

impl EcnModel {
    /// Analytic model of an AR(1) volume process: stationary snapshot
    /// distribution for `init` and the exact joint law of
    /// `(x, -kappa (x - mean) + noise)` for `delta`.
    pub fn reference(p: &VolumeProcess) -> Self {
        let d = 2 * p.n;
        let mean: Vec<f64> = (0..d).map(|i| p.mean_volume(i % p.n + 1)).collect();
        let kappa = p.volume_reversion;
        let noise_var = p.volume_noise * p.volume_noise;
        // stationary variance of x' = x - kappa (x - m) + e
        let stat_var = if kappa > 0.0 {
            noise_var / (1.0 - (1.0 - kappa) * (1.0 - kappa))
        } else {
            noise_var
        };
        let mut joint_mean = mean.clone();
        joint_mean.extend(std::iter::repeat_n(0.0, d));
        let mut joint = vec![vec![0.0; 2 * d]; 2 * d];
        for i in 0..d {
            joint[i][i] = stat_var;
            joint[i][d + i] = -kappa * stat_var;
            joint[d + i][i] = -kappa * stat_var;
            joint[d + i][d + i] = kappa * kappa * stat_var + noise_var;
        }
        let mut init_cov = vec![vec![0.0; d]; d];
        for (i, row) in init_cov.iter_mut().enumerate() {
            row[i] = stat_var;
        }
        let size_var = (0.5 * p.order_size).powi(2);
        EcnModel {
            n: p.n,
            dt: 1,
            tick_size: p.tick_size,
            initial_mid: p.initial_mid,
            min_order_size: 0.1 * p.order_size,
            init: GaussianMixture {
                k: 1,
                weights: vec![1.0],
                means: vec![mean],
                covs: vec![init_cov],
            },
            delta: GaussianMixture {
                k: 1,
                weights: vec![1.0],
                means: vec![joint_mean],
                covs: vec![joint],
            },
            decomp: GaussianMixture {
                k: 1,
                weights: vec![1.0],
                means: vec![vec![p.order_size]],
                covs: vec![vec![vec![size_var]]],
            },
        }
    }

    pub fn validate(&self) -> Result<(), MixtureError> {
        let d = 2 * self.n;
        let check = |m: &GaussianMixture, want: usize| {
            m.validate()?;
            if m.dim() != want {
                return Err(MixtureError::Dimension {
                    expected: want,
                    got: m.dim(),
                });
            }
            Ok(())
        };
        check(&self.init, d)?;
        check(&self.delta, 2 * d)?;
        check(&self.decomp, 1)?;
        if self.n == 0 || self.dt == 0 || !(self.tick_size > 0.0) || !(self.initial_mid > 0.0) {
            return Err(MixtureError::DegenerateModel("bad scalar parameters".into()));
        }
        Ok(())
    }

    pub fn compile(&self) -> Result<EcnEngine, MixtureError> {
        self.validate()?;
        Ok(EcnEngine {
            model: self.clone(),
            init: self.init.sampler()?,
            delta: ConditionalSampler::new(&self.delta, 2 * self.n)?,
            decomp: self.decomp.sampler()?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::from_json(&text)?)
    }
}

/// A compiled, immutable ECN model; shareable across threads.
pub struct EcnEngine {
    model: EcnModel,
    init: MixtureSampler,
    delta: ConditionalSampler,
    decomp: MixtureSampler,
}

impl std::fmt::Debug for EcnEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EcnEngine").field("model", &self.model).finish()
    }
}

impl EcnEngine {
    pub fn model(&self) -> &EcnModel {
        &self.model
    }

    pub fn levels(&self) -> usize {
        self.model.n
    }

    fn initial_mid_ticks2(&self) -> i64 {
        2 * (self.model.initial_mid / self.model.tick_size).round() as i64
    }

    fn sample_snapshot<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.init
            .sample(rng)
            .into_iter()
            .map(|v| if v >= self.model.min_order_size { v } else { 0.0 })
            .collect()
    }

    fn place_side(&self, book: &mut OrderBook, side: Side, vols: &[f64], mid_ticks2: i64) {
        for (k, &v) in vols.iter().enumerate() {
            if v > QTY_EPS {
                let price = book.tick_to_price(level_tick(side, k + 1, mid_ticks2));
                book.submit_limit(side, price, v, Counterparty::Ecn)
                    .expect("snapshot level is on the grid");
            }
        }
    }

    /// Fresh book from the initial-snapshot mixture, one ECN order per
    /// non-empty level. Negative draws are clipped to empty levels.
    pub fn sample_initial_book<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<OrderBook, MixtureError> {
        let n = self.model.n;
        let m2 = self.initial_mid_ticks2();
        for _ in 0..SAMPLE_RETRY_CAP {
            let x = self.sample_snapshot(rng);
            let (bids, asks) = x.split_at(n);
            if bids.iter().all(|v| *v <= QTY_EPS) || asks.iter().all(|v| *v <= QTY_EPS) {
                continue;
            }
            let mut book = OrderBook::new(self.model.tick_size);
            self.place_side(&mut book, Side::Buy, bids, m2);
            self.place_side(&mut book, Side::Sell, asks, m2);
            return Ok(book);
        }
        Err(MixtureError::DegenerateModel(
            "initial snapshot model keeps producing an empty side".into(),
        ))
    }

    /// Re-seeds any empty side from the initial-snapshot mixture around the
    /// anchor mid. Returns true if something was placed.
    pub fn refill_empty_sides<R: Rng + ?Sized>(
        &self,
        book: &mut OrderBook,
        anchor_ticks2: i64,
        rng: &mut R,
    ) -> Result<bool, MixtureError> {
        let n = self.model.n;
        let mut refilled = false;
        for side in [Side::Buy, Side::Sell] {
            if !book.is_side_empty(side) {
                continue;
            }
            let m2 = book.mid_ticks2().unwrap_or(anchor_ticks2);
            let mut done = false;
            for _ in 0..SAMPLE_RETRY_CAP {
                let x = self.sample_snapshot(rng);
                let vols = match side {
                    Side::Buy => &x[..n],
                    Side::Sell => &x[n..],
                };
                if vols.iter().any(|v| *v > QTY_EPS) {
                    self.place_side(book, side, vols, m2);
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(MixtureError::DegenerateModel(
                    "cannot re-seed empty side".into(),
                ));
            }
            refilled = true;
        }
        Ok(refilled)
    }

    /// Child order sizes summing to `total`.
    pub fn decompose<R: Rng + ?Sized>(&self, total: f64, rng: &mut R) -> Vec<f64> {
        let min = self.model.min_order_size;
        let mut left = total;
        let mut out = Vec::new();
        while left > QTY_EPS {
            if out.len() + 1 == MAX_CHILD_ORDERS {
                out.push(left);
                break;
            }
            let s = self.decomp.sample(rng)[0].abs().max(min);
            let mut child = s.min(left);
            if left - child < min {
                child = left;
            }
            out.push(child);
            left -= child;
        }
        out
    }

    /// Applies an explicit per-level volume change vector
    /// (`[bid_1..bid_n, ask_1..ask_n]`) around the given mid.
    pub fn apply_deltas<R: Rng + ?Sized>(
        &self,
        book: &mut OrderBook,
        deltas: &[f64],
        mid_ticks2: i64,
        rng: &mut R,
    ) -> Vec<AppliedOrder> {
        let n = self.model.n;
        let mut applied = Vec::new();
        for (i, &d) in deltas.iter().enumerate() {
            if d.abs() < self.model.min_order_size || !d.is_finite() {
                continue;
            }
            let (side, level) = if i < n {
                (Side::Buy, i + 1)
            } else {
                (Side::Sell, i - n + 1)
            };
            let tick = level_tick(side, level, mid_ticks2);
            let price = book.tick_to_price(tick);
            if d > 0.0 {
                for qty in self.decompose(d, rng) {
                    book.submit_limit(side, price, qty, Counterparty::Ecn)
                        .expect("snapshot level is on the grid");
                    applied.push(AppliedOrder {
                        action: OrderAction::Limit,
                        side,
                        price,
                        qty,
                    });
                }
            } else {
                let available = book.volume_at_tick(side, tick);
                let wanted = (-d).min(available);
                if wanted <= QTY_EPS {
                    continue;
                }
                for qty in self.decompose(wanted, rng) {
                    let removed = book.reduce_level(side, tick, qty);
                    if removed > QTY_EPS {
                        applied.push(AppliedOrder {
                            action: OrderAction::Cancel,
                            side,
                            price,
                            qty: removed,
                        });
                    }
                }
            }
        }
        applied
    }

    /// One evolution of the book: sample level changes conditioned on the
    /// current snapshot and apply them as child limit orders/cancellations.
    pub fn evolve_book<R: Rng + ?Sized>(
        &self,
        book: &mut OrderBook,
        anchor_ticks2: i64,
        rng: &mut R,
    ) -> Vec<AppliedOrder> {
        let m2 = book.mid_ticks2().unwrap_or(anchor_ticks2);
        let x = snapshot(book, self.model.n, m2).to_vector();
        let deltas = self.delta.sample(&x, rng);
        self.apply_deltas(book, &deltas, m2, rng)
    }
}

/// Fitted model plus the EM traces, for reporting.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub model: EcnModel,
    /// `(initial, final)` training log-likelihood per mixture.
    pub init_ll: (f64, f64),
    pub delta_ll: (f64, f64),
    pub decomp_ll: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub components: usize,
    pub decomp_components: usize,
    pub dt: usize,
    pub min_order_size: f64,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            components: 3,
            decomp_components: 2,
            dt: 1,
            min_order_size: 0.1,
            seed: 0,
        }
    }
}

/// Fits the three mixtures to a snapshot series.
pub fn calibrate(
    rows: &[BookSnapshot],
    tick_size: f64,
    cfg: &CalibrationConfig,
) -> Result<Calibration, MixtureError> {
    let n = rows.first().map_or(0, |r| r.levels());
    if n == 0 || cfg.dt == 0 {
        return Err(MixtureError::InsufficientData {
            needed: 1,
            got: rows.len(),
        });
    }
    let snaps: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vector()).collect();
    let mut pairs = Vec::new();
    let mut sizes = Vec::new();
    for w in 0..snaps.len().saturating_sub(cfg.dt) {
        let (x, nx) = (&snaps[w], &snaps[w + cfg.dt]);
        let delta: Vec<f64> = nx.iter().zip(x).map(|(a, b)| a - b).collect();
        sizes.extend(
            delta
                .iter()
                .map(|d| d.abs())
                .filter(|d| *d >= cfg.min_order_size)
                .map(|d| vec![d]),
        );
        let mut joint = x.clone();
        joint.extend(delta);
        pairs.push(joint);
    }
    let edge = |ll: &[f64]| (ll[0], *ll.last().unwrap());
    let init = GaussianMixture::fit(&snaps, cfg.components, cfg.seed)?;
    let delta = GaussianMixture::fit(&pairs, cfg.components, cfg.seed.wrapping_add(1))?;
    let decomp = GaussianMixture::fit(&sizes, cfg.decomp_components, cfg.seed.wrapping_add(2))?;
    let initial_mid = rows[0].mid;
    Ok(Calibration {
        init_ll: edge(&init.log_likelihood),
        delta_ll: edge(&delta.log_likelihood),
        decomp_ll: edge(&decomp.log_likelihood),
        model: EcnModel {
            n,
            dt: cfg.dt,
            tick_size,
            initial_mid: (initial_mid / tick_size).round() * tick_size,
            min_order_size: cfg.min_order_size,
            init: init.mixture,
            delta: delta.mixture,
            decomp: decomp.mixture,
        },
    })
}
