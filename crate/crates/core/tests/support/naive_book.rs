//! Brute-force price-time priority matcher used as an oracle for `OrderBook`.
//! Orders live in one vector in arrival order; every match scans all of it.

use dealersim::ecn::OrderBook;
use dealersim::market::{Counterparty, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Limit { side: Side, tick: i64, qty: f64 },
    Market { side: Side, qty: f64 },
    /// Cancels the k-th order id handed out so far (modulo the count).
    Cancel { k: usize },
}

/// `(maker order, tick, qty)`
pub type NaiveFill = (u64, i64, f64);

#[derive(Debug, Default)]
pub struct NaiveBook {
    orders: Vec<(u64, Side, i64, f64)>,
    next_id: u64,
    pub issued: Vec<u64>,
}

impl NaiveBook {
    pub fn new() -> Self {
        NaiveBook {
            next_id: 1,
            ..Default::default()
        }
    }

    fn take(&mut self, side: Side, mut qty: f64, limit: Option<i64>) -> (Vec<NaiveFill>, f64) {
        let mut fills = Vec::new();
        while qty > 1e-9 {
            let mut best: Option<usize> = None;
            for (k, o) in self.orders.iter().enumerate() {
                if o.1 == side {
                    continue;
                }
                let ok = match (side, limit) {
                    (_, None) => true,
                    (Side::Buy, Some(l)) => o.2 <= l,
                    (Side::Sell, Some(l)) => o.2 >= l,
                };
                if !ok {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => match side {
                        Side::Buy => o.2 < self.orders[b].2,
                        Side::Sell => o.2 > self.orders[b].2,
                    },
                };
                if better {
                    best = Some(k);
                }
            }
            let Some(k) = best else { break };
            let o = &mut self.orders[k];
            let q = qty.min(o.3);
            fills.push((o.0, o.2, q));
            o.3 -= q;
            qty -= q;
            if o.3 <= 1e-9 {
                self.orders.remove(k);
            }
        }
        (fills, qty.max(0.0))
    }

    pub fn apply(&mut self, op: Op) -> Vec<NaiveFill> {
        match op {
            Op::Limit { side, tick, qty } => {
                let (fills, left) = self.take(side, qty, Some(tick));
                let id = self.next_id;
                self.next_id += 1;
                self.issued.push(id);
                if left > 1e-9 {
                    self.orders.push((id, side, tick, left));
                }
                fills
            }
            Op::Market { side, qty } => self.take(side, qty, None).0,
            Op::Cancel { k } => {
                if let Some(&id) = self.issued.get(k % self.issued.len().max(1)) {
                    self.orders.retain(|o| o.0 != id);
                }
                Vec::new()
            }
        }
    }

    /// Aggregated `(tick, volume)` levels, best first.
    pub fn depth(&self, side: Side) -> Vec<(i64, f64)> {
        let mut ticks: Vec<i64> = self.orders.iter().filter(|o| o.1 == side).map(|o| o.2).collect();
        ticks.sort_unstable();
        ticks.dedup();
        if side == Side::Buy {
            ticks.reverse();
        }
        ticks
            .into_iter()
            .map(|t| (t, self.orders.iter().filter(|o| o.1 == side && o.2 == t).map(|o| o.3).sum()))
            .collect()
    }
}

/// Applies `op` to the real book, returning fills in the oracle's shape.
pub fn apply_real(book: &mut OrderBook, issued: &[u64], op: Op) -> Vec<NaiveFill> {
    let own = Counterparty::Ecn;
    let conv = |b: &OrderBook, fills: &[dealersim::ecn::Fill]| -> Vec<NaiveFill> {
        fills
            .iter()
            .map(|f| (f.maker_order, b.price_to_tick(f.price).expect("fill on grid"), f.qty))
            .collect()
    };
    match op {
        Op::Limit { side, tick, qty } => {
            let price = book.tick_to_price(tick);
            let r = book.submit_limit(side, price, qty, own).expect("valid limit");
            conv(book, &r.fills)
        }
        Op::Market { side, qty } => {
            let r = book.submit_market(side, qty, own).expect("valid market");
            conv(book, &r.fills)
        }
        Op::Cancel { k } => {
            if let Some(&id) = issued.get(k % issued.len().max(1)) {
                let _ = book.cancel(id);
            }
            Vec::new()
        }
    }
}

/// Replays `ops` on both books; returns a description of the first
/// divergence.
pub fn compare(ops: &[Op]) -> Result<(), String> {
    let mut real = OrderBook::new(0.01);
    let mut naive = NaiveBook::new();
    for (n, &op) in ops.iter().enumerate() {
        let issued = naive.issued.clone();
        let got = apply_real(&mut real, &issued, op);
        let want = naive.apply(op);
        if got.len() != want.len()
            || got.iter().zip(&want).any(|(a, b)| a.0 != b.0 || a.1 != b.1 || (a.2 - b.2).abs() > 1e-9)
        {
            return Err(format!("op {n} {op:?}: fills {got:?} vs {want:?}"));
        }
        for side in [Side::Buy, Side::Sell] {
            let (a, b) = (real.depth(side), naive.depth(side));
            if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0 || (x.1 - y.1).abs() > 1e-9) {
                return Err(format!("op {n} {op:?}: {side:?} depth {a:?} vs {b:?}"));
            }
        }
    }
    Ok(())
}

/// Random op sequence on a narrow tick band so orders cross often.
pub fn random_ops<R: rand::Rng>(rng: &mut R, len: usize) -> Vec<Op> {
    (0..len)
        .map(|_| {
            let side = if rng.random::<bool>() { Side::Buy } else { Side::Sell };
            let qty = rng.random_range(1..=8) as f64 * 0.5;
            match rng.random_range(0..10) {
                0..=5 => Op::Limit {
                    side,
                    tick: rng.random_range(9995..=10005),
                    qty,
                },
                6..=7 => Op::Market { side, qty },
                _ => Op::Cancel {
                    k: rng.random_range(0..64),
                },
            }
        })
        .collect()
}
