//! Market vocabulary shared by every other module: sides, quotes, reference
//! prices, trades and the per-agent PnL ledger.
//!
//! All PnL is decomposed into a *spread* part (earned by the passive side of
//! a fill, paid by the aggressor, measured against the mid at execution) and
//! an *inventory* part (position times mid move). Cash and inventory are kept
//! alongside so that `spread + inventory == cash + inventory * mark_mid` can
//! be checked at any time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an agent inside an environment. LPs come first, then LTs.
pub type AgentId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("negative quantity {0}")]
    NegativeQuantity(f64),
    #[error("malformed trade: {0}")]
    MalformedTrade(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    /// +1 for a buy, -1 for a sell: the sign of the inventory change.
    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
        }
    }
}

/// Who sits on one side of a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Counterparty {
    Agent(AgentId),
    Ecn,
}

impl std::fmt::Display for Counterparty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Counterparty::Agent(id) => write!(f, "{id}"),
            Counterparty::Ecn => f.write_str("ecn"),
        }
    }
}

/// Two-sided price published by a liquidity provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub bid_price: f64,
    pub ask_price: f64,
    pub quote_size: f64,
}

impl Quote {
    /// Price an aggressor pays (buy) or receives (sell) against this quote.
    pub fn price_for(&self, aggressor_side: Side) -> f64 {
        match aggressor_side {
            Side::Buy => self.ask_price,
            Side::Sell => self.bid_price,
        }
    }
}

/// ECN mid-price and the two half-spreads around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePrices {
    pub p_mid: f64,
    pub s_ref_bid: f64,
    pub s_ref_ask: f64,
}

impl ReferencePrices {
    pub fn from_best(best_bid: f64, best_ask: f64) -> Self {
        let p_mid = 0.5 * (best_bid + best_ask);
        ReferencePrices {
            p_mid,
            s_ref_bid: p_mid - best_bid,
            s_ref_ask: best_ask - p_mid,
        }
    }

    pub fn total_spread(&self) -> f64 {
        self.s_ref_bid + self.s_ref_ask
    }

    pub fn best_bid(&self) -> f64 {
        self.p_mid - self.s_ref_bid
    }

    pub fn best_ask(&self) -> f64 {
        self.p_mid + self.s_ref_ask
    }

    /// Same spreads around a mid shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        ReferencePrices {
            p_mid: self.p_mid + offset,
            ..*self
        }
    }
}

/// A single execution. `side` is the aggressor's side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub side: Side,
    pub qty: f64,
    pub exec_price: f64,
    pub aggressor: Counterparty,
    pub passive: Counterparty,
    pub step: usize,
}

impl Trade {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.qty > 0.0) {
            return Err(MarketError::MalformedTrade("quantity must be positive"));
        }
        if !(self.exec_price > 0.0) {
            return Err(MarketError::MalformedTrade("price must be positive"));
        }
        if self.aggressor == self.passive {
            return Err(MarketError::MalformedTrade("self trade"));
        }
        Ok(())
    }

    /// Side of the trade as seen by `who`, if `who` took part in it.
    pub fn side_of(&self, who: Counterparty) -> Option<Side> {
        if who == self.aggressor {
            Some(self.side)
        } else if who == self.passive {
            Some(self.side.opposite())
        } else {
            None
        }
    }
}

/// `qty * spread`. Quantity must be non-negative; the spread may be negative
/// when the passive side quoted through the mid.
pub fn spread_pnl(qty: f64, spread: f64) -> Result<f64, MarketError> {
    if qty < 0.0 {
        return Err(MarketError::NegativeQuantity(qty));
    }
    Ok(qty * spread)
}

pub fn inventory_pnl(inventory: f64, delta_mid: f64) -> f64 {
    inventory * delta_mid
}

/// Signed spread earned by the side that ends up with `own_side` at
/// `exec_price` relative to `mid`.
fn signed_spread(own_side: Side, exec_price: f64, mid: f64) -> f64 {
    match own_side {
        Side::Sell => exec_price - mid,
        Side::Buy => mid - exec_price,
    }
}

/// Per-step changes of the ledger's PnL components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PnlDeltas {
    pub total: f64,
    pub inventory: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PnlLedger {
    pub inventory: f64,
    pub cash: f64,
    pub spread_pnl_cum: f64,
    pub inventory_pnl_cum: f64,
    /// Mid at which the inventory was last marked.
    pub mark_mid: f64,
    step_base_spread: f64,
    step_base_inventory: f64,
}

impl PnlLedger {
    pub fn new(mark_mid: f64) -> Self {
        PnlLedger {
            mark_mid,
            ..Default::default()
        }
    }

    pub fn total_pnl(&self) -> f64 {
        self.spread_pnl_cum + self.inventory_pnl_cum
    }

    /// Cash plus marked inventory; equals `total_pnl` up to rounding.
    pub fn mark_value(&self) -> f64 {
        self.cash + self.inventory * self.mark_mid
    }

    /// Starts a new accounting step; deltas are measured from here.
    pub fn begin_step(&mut self) {
        self.step_base_spread = self.spread_pnl_cum;
        self.step_base_inventory = self.inventory_pnl_cum;
    }

    pub fn last_step_deltas(&self) -> PnlDeltas {
        let spread = self.spread_pnl_cum - self.step_base_spread;
        let inventory = self.inventory_pnl_cum - self.step_base_inventory;
        PnlDeltas {
            total: spread + inventory,
            inventory,
            spread,
        }
    }

    /// Books `trade` for participant `me`, with spread measured against
    /// `mid`. Returns the spread PnL credited to `me` (zero if `me` is not
    /// on the trade).
    pub fn apply_trade(
        &mut self,
        trade: &Trade,
        me: Counterparty,
        mid: f64,
    ) -> Result<f64, MarketError> {
        trade.validate()?;
        let Some(own_side) = trade.side_of(me) else {
            return Ok(0.0);
        };
        let pnl = spread_pnl(trade.qty, signed_spread(own_side, trade.exec_price, mid))?;
        self.inventory += own_side.sign() * trade.qty;
        self.cash -= own_side.sign() * trade.qty * trade.exec_price;
        self.spread_pnl_cum += pnl;
        Ok(pnl)
    }

    /// Marks the current inventory from `old_mid` to `new_mid`. Returns the
    /// inventory PnL of the move.
    pub fn mark_to_market(&mut self, new_mid: f64, old_mid: f64) -> f64 {
        let pnl = inventory_pnl(self.inventory, new_mid - old_mid);
        self.inventory_pnl_cum += pnl;
        self.mark_mid = new_mid;
        pnl
    }

    /// `mark_to_market` from the ledger's own last mark.
    pub fn mark(&mut self, new_mid: f64) -> f64 {
        let old = self.mark_mid;
        self.mark_to_market(new_mid, old)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn spread_pnl_examples() {
        assert!(close(spread_pnl(2.0, 0.3).unwrap(), 0.6));
        assert_eq!(spread_pnl(0.0, 5.0).unwrap(), 0.0);
        assert!(close(spread_pnl(3.0, -0.1).unwrap(), -0.3));
        assert_eq!(
            spread_pnl(-1.0, 0.1),
            Err(MarketError::NegativeQuantity(-1.0))
        );
    }

    #[test]
    fn inventory_pnl_examples() {
        assert!(close(inventory_pnl(5.0, -0.2), -1.0));
        assert_eq!(inventory_pnl(0.0, 1.7), 0.0);
        assert!(close(inventory_pnl(-4.0, -0.5), 2.0));
    }

    fn lt_buys_from_lp(price: f64) -> Trade {
        Trade {
            side: Side::Buy,
            qty: 1.0,
            exec_price: price,
            aggressor: Counterparty::Agent(1),
            passive: Counterparty::Agent(0),
            step: 0,
        }
    }

    #[test]
    fn passive_seller_earns_spread() {
        let mut lp = PnlLedger::new(100.0);
        let mut lt = PnlLedger::new(100.0);
        let trade = lt_buys_from_lp(100.5);
        lp.apply_trade(&trade, Counterparty::Agent(0), 100.0).unwrap();
        lt.apply_trade(&trade, Counterparty::Agent(1), 100.0).unwrap();
        assert!(close(lp.spread_pnl_cum, 0.5));
        assert_eq!(lp.inventory, -1.0);
        assert!(close(lt.spread_pnl_cum, -0.5));
        assert_eq!(lt.inventory, 1.0);
        assert!(close(lp.mark_value(), lp.total_pnl()));
        assert!(close(lt.mark_value(), lt.total_pnl()));
    }

    #[test]
    fn fill_at_mid_has_no_spread() {
        let mut lp = PnlLedger::new(100.0);
        lp.apply_trade(&lt_buys_from_lp(100.0), Counterparty::Agent(0), 100.0)
            .unwrap();
        assert_eq!(lp.spread_pnl_cum, 0.0);
    }

    #[test]
    fn bystander_is_untouched() {
        let mut other = PnlLedger::new(100.0);
        let pnl = other
            .apply_trade(&lt_buys_from_lp(100.5), Counterparty::Agent(7), 100.0)
            .unwrap();
        assert_eq!(pnl, 0.0);
        assert_eq!(other, PnlLedger::new(100.0));
    }

    #[test]
    fn malformed_trades_rejected() {
        let mut l = PnlLedger::new(100.0);
        let mut t = lt_buys_from_lp(100.5);
        t.qty = 0.0;
        assert!(l.apply_trade(&t, Counterparty::Agent(0), 100.0).is_err());
        let mut t = lt_buys_from_lp(100.5);
        t.passive = t.aggressor;
        assert!(l.apply_trade(&t, Counterparty::Agent(1), 100.0).is_err());
    }

    #[test]
    fn mark_to_market_examples() {
        let mut l = PnlLedger::new(100.0);
        l.inventory = 5.0;
        l.begin_step();
        l.mark_to_market(99.8, 100.0);
        assert!(close(l.last_step_deltas().inventory, -1.0));

        let mut flat = PnlLedger::new(100.0);
        flat.begin_step();
        flat.mark_to_market(123.0, 100.0);
        assert_eq!(flat.last_step_deltas().inventory, 0.0);

        let mut short = PnlLedger::new(100.0);
        short.inventory = -2.0;
        short.begin_step();
        short.mark_to_market(101.0, 100.0);
        assert!(close(short.last_step_deltas().inventory, -2.0));
    }

    #[test]
    fn deltas_reconstruct_cumulative() {
        let mut l = PnlLedger::new(100.0);
        let mids = [100.0, 100.01, 99.98, 100.03, 100.03, 99.9];
        let (mut spread_sum, mut inv_sum) = (0.0, 0.0);
        for (t, &m) in mids.iter().enumerate().skip(1) {
            l.begin_step();
            l.mark(m);
            let side = if t % 2 == 0 { Side::Buy } else { Side::Sell };
            let trade = Trade {
                side,
                qty: t as f64,
                exec_price: m + 0.01 * side.sign(),
                aggressor: Counterparty::Agent(3),
                passive: Counterparty::Agent(0),
                step: t,
            };
            l.apply_trade(&trade, Counterparty::Agent(0), m).unwrap();
            let d = l.last_step_deltas();
            assert!(close(d.total, d.spread + d.inventory));
            spread_sum += d.spread;
            inv_sum += d.inventory;
        }
        assert!(close(spread_sum, l.spread_pnl_cum));
        assert!(close(inv_sum, l.inventory_pnl_cum));
        assert!(close(l.mark_value(), l.total_pnl()));
    }
}
