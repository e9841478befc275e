//! Fixed-length observation vectors for both families.
//!
//! LP layout:
//! `[mid, mid history (H), inventory, elapsed, prev share, book volumes (2n),
//!   hedge costs (4), w, γ, m*, p(LT), p(ECN)]`
//!
//! LT layout:
//! `[mid, mid history (H), inventory, elapsed, q_sell, q_buy,
//!   (buy cost, sell cost) per LP slot, ECN buy cost, ECN sell cost,
//!   w, γ, q*_sell, q*_buy, p(LP), p(ECN)]`
//!
//! Prices are expressed relative to the current mid and divided by
//! `price_scale`; the type fields are appended raw and stay constant over an
//! episode.

use serde::{Deserialize, Serialize};

use super::types::AgentType;
use crate::ecn::OrderBook;
use crate::market::{ReferencePrices, Side};

pub const HEDGE_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
/// Cost reported for an unconnected venue, in multiples of the total
/// reference spread.
pub const SENTINEL_SPREADS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationConfig {
    pub history_len: usize,
    pub levels: usize,
    pub price_scale: f64,
    pub inventory_scale: f64,
    pub volume_scale: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig {
            history_len: 10,
            levels: 5,
            price_scale: 0.1,
            inventory_scale: 10.0,
            volume_scale: 10.0,
        }
    }
}

impl ObservationConfig {
    pub fn lp_dim(&self) -> usize {
        1 + self.history_len + 3 + 2 * self.levels + HEDGE_GRID.len() + 5
    }

    pub fn lt_dim(&self, n_lp: usize) -> usize {
        1 + self.history_len + 4 + 2 * n_lp + 2 + 6
    }

    /// Index of the first type slot in an LP observation.
    pub fn lp_type_offset(&self) -> usize {
        self.lp_dim() - 5
    }

    pub fn lt_type_offset(&self, n_lp: usize) -> usize {
        self.lt_dim(n_lp) - 6
    }
}

/// Market state visible to everyone at the current step.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    pub t: usize,
    pub episode_len: usize,
    /// Mids from the episode start through the current one.
    pub mids: &'a [f64],
    pub reference: ReferencePrices,
    /// `[bid_1..bid_n, ask_1..ask_n]`
    pub book_volumes: &'a [f64],
}

pub struct LpView<'a> {
    pub market: MarketView<'a>,
    pub inventory: f64,
    pub prev_share: f64,
    pub hedge_costs: [f64; 4],
    pub ty: &'a AgentType,
}

/// Per-venue `(buy cost, sell cost)`, `None` when not connected.
pub type VenueCost = Option<(f64, f64)>;

pub struct LtView<'a> {
    pub market: MarketView<'a>,
    pub inventory: f64,
    /// Empirical frequencies `[sell, buy, hold]`.
    pub frequencies: [f64; 3],
    pub lp_costs: &'a [VenueCost],
    pub ecn_cost: VenueCost,
    pub ty: &'a AgentType,
}

fn push_market(out: &mut Vec<f64>, m: &MarketView<'_>, cfg: &ObservationConfig, inventory: f64) {
    let now = *m.mids.last().expect("at least one mid");
    out.push((now - m.mids[0]) / cfg.price_scale);
    for k in 1..=cfg.history_len {
        let v = if m.mids.len() > k {
            (m.mids[m.mids.len() - 1 - k] - now) / cfg.price_scale
        } else {
            0.0
        };
        out.push(v);
    }
    out.push(inventory / cfg.inventory_scale);
    out.push(m.t as f64 / m.episode_len.max(1) as f64);
}

pub fn build_lp_observation(view: &LpView<'_>, cfg: &ObservationConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.lp_dim());
    push_market(&mut out, &view.market, cfg, view.inventory);
    out.push(view.prev_share);
    debug_assert_eq!(view.market.book_volumes.len(), 2 * cfg.levels);
    out.extend(view.market.book_volumes.iter().map(|v| v / cfg.volume_scale));
    let cost_scale = cfg.price_scale * cfg.inventory_scale;
    out.extend(view.hedge_costs.iter().map(|c| c / cost_scale));
    let ty = view.ty;
    out.extend([
        ty.w,
        ty.gamma,
        ty.market_share_target.unwrap_or(0.0),
        ty.connect_prob_lt,
        ty.connect_prob_ecn,
    ]);
    debug_assert_eq!(out.len(), cfg.lp_dim());
    out
}

pub fn build_lt_observation(view: &LtView<'_>, cfg: &ObservationConfig) -> Vec<f64> {
    let n_lp = view.lp_costs.len();
    let mut out = Vec::with_capacity(cfg.lt_dim(n_lp));
    push_market(&mut out, &view.market, cfg, view.inventory);
    out.push(view.frequencies[0]);
    out.push(view.frequencies[1]);
    let sentinel = SENTINEL_SPREADS * view.market.reference.total_spread() / cfg.price_scale;
    let mut push_cost = |c: &VenueCost| match c {
        Some((buy, sell)) => {
            out.push(buy / cfg.price_scale);
            out.push(sell / cfg.price_scale);
        }
        None => {
            out.push(sentinel);
            out.push(sentinel);
        }
    };
    for c in view.lp_costs {
        push_cost(c);
    }
    push_cost(&view.ecn_cost);
    let ty = view.ty;
    let q = ty.flow_targets.map(|q| q.0).unwrap_or([0.0; 3]);
    out.extend([
        ty.w,
        ty.gamma,
        q[0],
        q[1],
        ty.connect_prob_lp,
        ty.connect_prob_ecn,
    ]);
    debug_assert_eq!(out.len(), cfg.lt_dim(n_lp));
    out
}

/// Whole units hedged for a fraction `h` of inventory `z`.
pub fn hedge_quantity(h: f64, inventory: f64) -> f64 {
    (h * inventory.abs() + 1e-9).floor()
}

/// Slippage cost (`qty · |vwap - mid|`) of market-ordering `h·|z|` into the
/// book for each fraction of [`HEDGE_GRID`].
pub fn hedge_cost_curve(book: &OrderBook, inventory: f64, book_mid: f64) -> [f64; 4] {
    let side = if inventory > 0.0 { Side::Sell } else { Side::Buy };
    HEDGE_GRID.map(|h| {
        let qty = hedge_quantity(h, inventory);
        if qty <= 0.0 {
            return 0.0;
        }
        match book.market_impact(side, qty) {
            (executed, Some(vwap)) => executed * (vwap - book_mid).abs(),
            _ => 0.0,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::types::{Family, FlowTargets};
    use crate::market::Counterparty;

    fn lp_type() -> AgentType {
        AgentType {
            family: Family::Lp,
            w: 0.7,
            alpha: 1.0,
            gamma: 0.3,
            market_share_target: Some(0.2),
            flow_targets: None,
            connect_prob_lt: 0.5,
            connect_prob_lp: 0.0,
            connect_prob_ecn: 1.0,
        }
    }

    fn lt_type() -> AgentType {
        AgentType {
            family: Family::Lt,
            w: 0.0,
            alpha: 1.0,
            gamma: 0.0,
            market_share_target: None,
            flow_targets: Some(FlowTargets::new(0.25, 0.75, 0.0).unwrap()),
            connect_prob_lt: 0.0,
            connect_prob_lp: 0.9,
            connect_prob_ecn: 1.0,
        }
    }

    fn reference() -> ReferencePrices {
        ReferencePrices {
            p_mid: 100.0,
            s_ref_bid: 0.01,
            s_ref_ask: 0.01,
        }
    }

    #[test]
    fn lp_observation_at_step_zero() {
        let cfg = ObservationConfig::default();
        let ty = lp_type();
        let vols = vec![1.0; 10];
        let mids = [100.0];
        let view = LpView {
            market: MarketView {
                t: 0,
                episode_len: 10,
                mids: &mids,
                reference: reference(),
                book_volumes: &vols,
            },
            inventory: 0.0,
            prev_share: 0.0,
            hedge_costs: [0.0; 4],
            ty: &ty,
        };
        let obs = build_lp_observation(&view, &cfg);
        assert_eq!(obs.len(), cfg.lp_dim());
        assert!(obs[..=cfg.history_len].iter().all(|v| *v == 0.0));
        assert_eq!(&obs[cfg.lp_type_offset()..], &[0.7, 0.3, 0.2, 0.5, 1.0]);
    }

    #[test]
    fn history_is_relative_to_current_mid() {
        let cfg = ObservationConfig {
            history_len: 3,
            ..Default::default()
        };
        let ty = lp_type();
        let vols = vec![0.0; 10];
        let mids = [100.0, 100.1, 100.2];
        let view = LpView {
            market: MarketView {
                t: 2,
                episode_len: 4,
                mids: &mids,
                reference: reference(),
                book_volumes: &vols,
            },
            inventory: 5.0,
            prev_share: 0.25,
            hedge_costs: [0.0; 4],
            ty: &ty,
        };
        let obs = build_lp_observation(&view, &cfg);
        let expect = [2.0, -1.0, -2.0, 0.0, 0.5, 0.5, 0.25];
        for (a, b) in obs.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{obs:?}");
        }
    }

    #[test]
    fn lt_costs_and_sentinel() {
        let cfg = ObservationConfig::default();
        let ty = lt_type();
        let vols = vec![0.0; 10];
        let mids = [100.0];
        let costs = [Some((0.01, 0.01)), None];
        let view = LtView {
            market: MarketView {
                t: 0,
                episode_len: 10,
                mids: &mids,
                reference: reference(),
                book_volumes: &vols,
            },
            inventory: 0.0,
            frequencies: [0.0; 3],
            lp_costs: &costs,
            ecn_cost: Some((0.01, 0.01)),
            ty: &ty,
        };
        let obs = build_lt_observation(&view, &cfg);
        assert_eq!(obs.len(), cfg.lt_dim(2));
        let base = 1 + cfg.history_len + 2;
        assert_eq!(&obs[base..base + 2], &[0.0, 0.0]);
        let c = base + 2;
        assert!((obs[c] - obs[c + 1]).abs() < 1e-12);
        let sentinel = 10.0 * 0.02 / 0.1;
        assert!((obs[c + 2] - sentinel).abs() < 1e-12);
        assert!((obs[c + 3] - sentinel).abs() < 1e-12);
        assert_eq!(&obs[cfg.lt_type_offset(2)..], &[0.0, 0.0, 0.25, 0.75, 0.9, 1.0]);
    }

    #[test]
    fn hedge_costs_zero_when_flat() {
        let mut book = OrderBook::new(0.01);
        book.submit_limit(Side::Buy, 99.99, 5.0, Counterparty::Ecn).unwrap();
        book.submit_limit(Side::Sell, 100.01, 5.0, Counterparty::Ecn).unwrap();
        assert_eq!(hedge_cost_curve(&book, 0.0, 100.0), [0.0; 4]);
        let c = hedge_cost_curve(&book, 4.0, 100.0);
        assert!((c[0] - 0.01).abs() < 1e-12);
        assert!((c[3] - 0.04).abs() < 1e-12);
        assert_eq!(hedge_quantity(0.5, -3.0), 1.0);
    }
}
