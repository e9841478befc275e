//! Price-time priority limit order book.
//!
//! Prices are stored as integer ticks; the public API speaks `f64` prices and
//! rejects anything that is not on the tick grid. Each price level is a FIFO
//! queue ordered by arrival sequence (order ids are allocated monotonically
//! and double as the sequence number).

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{Counterparty, ReferencePrices, Side};

pub type OrderId = u64;

/// Quantities below this are treated as fully consumed.
pub const QTY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BookError {
    #[error("{0:?} side of the book is empty")]
    EmptySide(Side),
    #[error("price {0} is not on the tick grid")]
    InvalidPrice(f64),
    #[error("invalid quantity {0}")]
    InvalidQuantity(f64),
    #[error("unknown order {0}")]
    UnknownOrder(OrderId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestingOrder {
    pub id: OrderId,
    pub owner: Counterparty,
    pub qty: f64,
}

/// One execution against a resting order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub maker_order: OrderId,
    pub maker: Counterparty,
    pub taker: Counterparty,
    /// Aggressor side.
    pub side: Side,
    pub price: f64,
    pub qty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitResult {
    pub order_id: OrderId,
    pub fills: Vec<Fill>,
    /// Quantity left resting on the book.
    pub resting: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketExecution {
    pub fills: Vec<Fill>,
    pub executed: f64,
    pub unfilled: f64,
}

impl MarketExecution {
    /// Volume-weighted execution price, `None` if nothing traded.
    pub fn vwap(&self) -> Option<f64> {
        if self.executed <= QTY_EPS {
            return None;
        }
        let notional: f64 = self.fills.iter().map(|f| f.price * f.qty).sum();
        Some(notional / self.executed)
    }
}

type Levels = BTreeMap<i64, VecDeque<RestingOrder>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderBook {
    bids: Levels,
    asks: Levels,
    tick_size: f64,
    inv_tick: f64,
    next_id: OrderId,
    index: HashMap<OrderId, (Side, i64)>,
}

impl OrderBook {
    pub fn new(tick_size: f64) -> Self {
        assert!(tick_size > 0.0 && tick_size.is_finite(), "bad tick size");
        let inv = 1.0 / tick_size;
        // keep 1/0.01 == 100 exact so tick -> price conversion is exact
        let inv_tick = if (inv - inv.round()).abs() < 1e-9 {
            inv.round()
        } else {
            inv
        };
        OrderBook {
            bids: Levels::new(),
            asks: Levels::new(),
            tick_size,
            inv_tick,
            next_id: 1,
            index: HashMap::new(),
        }
    }

    pub fn tick_size(&self) -> f64 {
        self.tick_size
    }

    pub fn tick_to_price(&self, tick: i64) -> f64 {
        tick as f64 / self.inv_tick
    }

    pub fn price_to_tick(&self, price: f64) -> Result<i64, BookError> {
        if !price.is_finite() {
            return Err(BookError::InvalidPrice(price));
        }
        let t = (price * self.inv_tick).round();
        if (t / self.inv_tick - price).abs() > 1e-9 * price.abs().max(1.0) {
            return Err(BookError::InvalidPrice(price));
        }
        Ok(t as i64)
    }

    fn side_levels(&self, side: Side) -> &Levels {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn side_levels_mut(&mut self, side: Side) -> &mut Levels {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    pub fn best_bid_tick(&self) -> Option<i64> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask_tick(&self) -> Option<i64> {
        self.asks.keys().next().copied()
    }

    pub fn best_bid(&self) -> Result<f64, BookError> {
        self.best_bid_tick()
            .map(|t| self.tick_to_price(t))
            .ok_or(BookError::EmptySide(Side::Buy))
    }

    pub fn best_ask(&self) -> Result<f64, BookError> {
        self.best_ask_tick()
            .map(|t| self.tick_to_price(t))
            .ok_or(BookError::EmptySide(Side::Sell))
    }

    pub fn mid_and_spreads(&self) -> Result<ReferencePrices, BookError> {
        Ok(ReferencePrices::from_best(self.best_bid()?, self.best_ask()?))
    }

    /// Twice the mid in ticks (the mid can sit on a half tick).
    pub fn mid_ticks2(&self) -> Option<i64> {
        Some(self.best_bid_tick()? + self.best_ask_tick()?)
    }

    pub fn is_side_empty(&self, side: Side) -> bool {
        self.side_levels(side).is_empty()
    }

    pub fn volume_at_tick(&self, side: Side, tick: i64) -> f64 {
        self.side_levels(side)
            .get(&tick)
            .map(|q| q.iter().map(|o| o.qty).sum())
            .unwrap_or(0.0)
    }

    pub fn total_volume(&self, side: Side) -> f64 {
        self.side_levels(side)
            .values()
            .flat_map(|q| q.iter())
            .map(|o| o.qty)
            .sum()
    }

    pub fn order_count(&self) -> usize {
        self.index.len()
    }

    /// Resting orders at a level, front of the queue first.
    pub fn queue_at_tick(&self, side: Side, tick: i64) -> Vec<RestingOrder> {
        self.side_levels(side)
            .get(&tick)
            .map(|q| q.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// `(tick, volume)` for every non-empty level, best first.
    pub fn depth(&self, side: Side) -> Vec<(i64, f64)> {
        let agg = |(t, q): (&i64, &VecDeque<RestingOrder>)| (*t, q.iter().map(|o| o.qty).sum());
        match side {
            Side::Buy => self.bids.iter().rev().map(agg).collect(),
            Side::Sell => self.asks.iter().map(agg).collect(),
        }
    }

    fn alloc_id(&mut self) -> OrderId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Matches an incoming order of `side` against the opposite book while
    /// the best opposite price is within `limit_tick` (or unconditionally for
    /// `None`). Returns fills and the unmatched remainder.
    fn match_incoming(
        &mut self,
        side: Side,
        mut qty: f64,
        limit_tick: Option<i64>,
        taker: Counterparty,
    ) -> (Vec<Fill>, f64) {
        let mut fills = Vec::new();
        while qty > QTY_EPS {
            let best = match side {
                Side::Buy => self.best_ask_tick(),
                Side::Sell => self.best_bid_tick(),
            };
            let Some(tick) = best else { break };
            let crosses = match (side, limit_tick) {
                (_, None) => true,
                (Side::Buy, Some(l)) => tick <= l,
                (Side::Sell, Some(l)) => tick >= l,
            };
            if !crosses {
                break;
            }
            let price = self.tick_to_price(tick);
            let opposite = side.opposite();
            let mut emptied = Vec::new();
            let levels = self.side_levels_mut(opposite);
            let queue = levels.get_mut(&tick).expect("best level exists");
            while qty > QTY_EPS {
                let Some(front) = queue.front_mut() else { break };
                let take = qty.min(front.qty);
                fills.push(Fill {
                    maker_order: front.id,
                    maker: front.owner,
                    taker,
                    side,
                    price,
                    qty: take,
                });
                front.qty -= take;
                qty -= take;
                if front.qty <= QTY_EPS {
                    emptied.push(front.id);
                    queue.pop_front();
                }
            }
            if queue.is_empty() {
                levels.remove(&tick);
            }
            for id in emptied {
                self.index.remove(&id);
            }
        }
        (fills, qty.max(0.0))
    }

    pub fn submit_limit(
        &mut self,
        side: Side,
        price: f64,
        qty: f64,
        owner: Counterparty,
    ) -> Result<LimitResult, BookError> {
        if !(qty > QTY_EPS) || !qty.is_finite() {
            return Err(BookError::InvalidQuantity(qty));
        }
        let tick = self.price_to_tick(price)?;
        let (fills, remaining) = self.match_incoming(side, qty, Some(tick), owner);
        let order_id = self.alloc_id();
        if remaining > QTY_EPS {
            self.side_levels_mut(side)
                .entry(tick)
                .or_default()
                .push_back(RestingOrder {
                    id: order_id,
                    owner,
                    qty: remaining,
                });
            self.index.insert(order_id, (side, tick));
        }
        Ok(LimitResult {
            order_id,
            fills,
            resting: if remaining > QTY_EPS { remaining } else { 0.0 },
        })
    }

    /// Walks the opposite side best price first. Exhausting the book is a
    /// partial fill, not an error.
    pub fn submit_market(
        &mut self,
        side: Side,
        qty: f64,
        owner: Counterparty,
    ) -> Result<MarketExecution, BookError> {
        if !(qty > QTY_EPS) || !qty.is_finite() {
            return Err(BookError::InvalidQuantity(qty));
        }
        let (fills, unfilled) = self.match_incoming(side, qty, None, owner);
        Ok(MarketExecution {
            executed: qty - unfilled,
            unfilled,
            fills,
        })
    }

    /// Cost of a hypothetical market order without touching the book:
    /// `(executable quantity, vwap)`.
    pub fn market_impact(&self, side: Side, qty: f64) -> (f64, Option<f64>) {
        let mut left = qty;
        let mut notional = 0.0;
        for (tick, vol) in self.depth(side.opposite()) {
            if left <= QTY_EPS {
                break;
            }
            let take = left.min(vol);
            notional += take * self.tick_to_price(tick);
            left -= take;
        }
        let executed = qty - left.max(0.0);
        if executed <= QTY_EPS {
            (0.0, None)
        } else {
            (executed, Some(notional / executed))
        }
    }

    pub fn cancel(&mut self, order_id: OrderId) -> Result<f64, BookError> {
        let (side, tick) = self
            .index
            .remove(&order_id)
            .ok_or(BookError::UnknownOrder(order_id))?;
        let levels = self.side_levels_mut(side);
        let queue = levels.get_mut(&tick).expect("indexed level exists");
        let pos = queue
            .iter()
            .position(|o| o.id == order_id)
            .expect("indexed order exists");
        let order = queue.remove(pos).expect("position valid");
        if queue.is_empty() {
            levels.remove(&tick);
        }
        Ok(order.qty)
    }

    /// Removes up to `qty` from the level, newest orders first (older orders
    /// keep their queue priority). Returns the quantity removed.
    pub fn reduce_level(&mut self, side: Side, tick: i64, qty: f64) -> f64 {
        let mut left = qty;
        let mut gone = Vec::new();
        let levels = self.side_levels_mut(side);
        let Some(queue) = levels.get_mut(&tick) else {
            return 0.0;
        };
        while left > QTY_EPS {
            let Some(back) = queue.back_mut() else { break };
            let take = left.min(back.qty);
            back.qty -= take;
            left -= take;
            if back.qty <= QTY_EPS {
                gone.push(back.id);
                queue.pop_back();
            }
        }
        if queue.is_empty() {
            levels.remove(&tick);
        }
        for id in gone {
            self.index.remove(&id);
        }
        qty - left.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ECN: Counterparty = Counterparty::Ecn;

    fn book_with(bids: &[(f64, f64)], asks: &[(f64, f64)]) -> OrderBook {
        let mut b = OrderBook::new(0.01);
        for &(p, q) in bids {
            b.submit_limit(Side::Buy, p, q, ECN).unwrap();
        }
        for &(p, q) in asks {
            b.submit_limit(Side::Sell, p, q, ECN).unwrap();
        }
        b
    }

    #[test]
    fn symmetric_book_reference() {
        let b = book_with(&[(99.5, 3.0)], &[(100.5, 2.0)]);
        let r = b.mid_and_spreads().unwrap();
        assert_eq!(r.p_mid, 100.0);
        assert_eq!(r.s_ref_bid, 0.5);
        assert_eq!(r.s_ref_ask, 0.5);
    }

    #[test]
    fn asymmetric_book_reference() {
        let b = book_with(&[(99.0, 1.0)], &[(100.5, 1.0)]);
        let r = b.mid_and_spreads().unwrap();
        assert!((r.p_mid - 99.75).abs() < 1e-12);
        assert!((r.s_ref_bid - 0.75).abs() < 1e-12);
        assert!((r.s_ref_ask - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_side_is_an_error() {
        let b = book_with(&[(99.0, 1.0)], &[]);
        assert_eq!(b.mid_and_spreads(), Err(BookError::EmptySide(Side::Sell)));
        assert_eq!(b.best_ask(), Err(BookError::EmptySide(Side::Sell)));
    }

    #[test]
    fn non_crossing_limit_rests() {
        let mut b = book_with(&[], &[(100.5, 2.0)]);
        let r = b
            .submit_limit(Side::Buy, 99.5, 1.0, Counterparty::Agent(0))
            .unwrap();
        assert!(r.fills.is_empty());
        assert_eq!(r.resting, 1.0);
        assert_eq!(b.best_bid().unwrap(), 99.5);
    }

    #[test]
    fn fifo_within_level() {
        let mut b = OrderBook::new(0.01);
        let a = b
            .submit_limit(Side::Sell, 100.5, 1.0, Counterparty::Agent(10))
            .unwrap()
            .order_id;
        b.submit_limit(Side::Sell, 100.5, 2.0, Counterparty::Agent(11))
            .unwrap();
        let r = b
            .submit_limit(Side::Buy, 100.5, 1.0, Counterparty::Agent(0))
            .unwrap();
        assert_eq!(r.fills.len(), 1);
        assert_eq!(r.fills[0].maker_order, a);
        assert_eq!(r.fills[0].maker, Counterparty::Agent(10));
        assert_eq!(b.volume_at_tick(Side::Sell, 10050), 2.0);
    }

    #[test]
    fn limit_walks_two_levels() {
        let mut b = book_with(&[], &[(100.5, 2.0), (101.0, 3.0)]);
        let r = b.submit_limit(Side::Buy, 101.0, 4.0, ECN).unwrap();
        let got: Vec<(f64, f64)> = r.fills.iter().map(|f| (f.price, f.qty)).collect();
        assert_eq!(got, vec![(100.5, 2.0), (101.0, 2.0)]);
        assert_eq!(r.resting, 0.0);
        assert_eq!(b.volume_at_tick(Side::Sell, 10100), 1.0);
    }

    #[test]
    fn off_grid_price_rejected() {
        let mut b = OrderBook::new(0.01);
        assert_eq!(
            b.submit_limit(Side::Buy, 100.005, 1.0, ECN),
            Err(BookError::InvalidPrice(100.005))
        );
    }

    #[test]
    fn market_order_examples() {
        let mut b = book_with(&[], &[(100.5, 2.0)]);
        let e = b.submit_market(Side::Buy, 1.0, ECN).unwrap();
        assert_eq!(e.executed, 1.0);
        assert_eq!(e.vwap(), Some(100.5));

        let mut b = book_with(&[], &[(100.5, 2.0), (101.0, 3.0)]);
        let e = b.submit_market(Side::Buy, 4.0, ECN).unwrap();
        assert!((e.vwap().unwrap() - 100.75).abs() < 1e-12);

        let mut b = book_with(&[], &[(100.5, 2.0), (101.0, 3.0)]);
        let e = b.submit_market(Side::Buy, 10.0, ECN).unwrap();
        assert_eq!(e.executed, 5.0);
        assert_eq!(e.unfilled, 5.0);
        assert!(b.is_side_empty(Side::Sell));
    }

    #[test]
    fn market_impact_matches_execution() {
        let b = book_with(&[(99.9, 1.0), (99.8, 4.0)], &[]);
        let (q, vwap) = b.market_impact(Side::Sell, 3.0);
        let mut b2 = b.clone();
        let e = b2.submit_market(Side::Sell, 3.0, ECN).unwrap();
        assert_eq!(q, e.executed);
        assert!((vwap.unwrap() - e.vwap().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn cancel_semantics() {
        let mut b = OrderBook::new(0.01);
        let id = b.submit_limit(Side::Buy, 99.0, 2.5, ECN).unwrap().order_id;
        assert_eq!(b.cancel(id), Ok(2.5));
        assert_eq!(b.cancel(id), Err(BookError::UnknownOrder(id)));
        assert!(b.is_side_empty(Side::Buy));

        let id = b.submit_limit(Side::Sell, 101.0, 1.0, ECN).unwrap().order_id;
        b.submit_market(Side::Buy, 1.0, Counterparty::Agent(0))
            .unwrap();
        assert_eq!(b.cancel(id), Err(BookError::UnknownOrder(id)));
    }

    #[test]
    fn reduce_level_takes_newest_first() {
        let mut b = OrderBook::new(0.01);
        let old = b.submit_limit(Side::Buy, 99.0, 1.0, ECN).unwrap().order_id;
        b.submit_limit(Side::Buy, 99.0, 1.0, ECN).unwrap();
        assert_eq!(b.reduce_level(Side::Buy, 9900, 1.5), 1.5);
        let q = b.queue_at_tick(Side::Buy, 9900);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].id, old);
        assert!((q[0].qty - 0.5).abs() < 1e-12);
        assert_eq!(b.reduce_level(Side::Buy, 9900, 5.0), 0.5);
        assert!(b.is_side_empty(Side::Buy));
        assert_eq!(b.order_count(), 0);
    }
}
