//! The stochastic game. One step is driven in three calls so that LPs quote
//! before LTs observe and react:
//!
//! 1. [`Env::reset`] (or the tail of the previous [`Env::trade`]) evolves the
//!    ECN, marks every ledger on the new mid and returns LP observations;
//! 2. [`Env::quote`] publishes LP quotes and returns LT observations;
//! 3. [`Env::trade`] routes LT orders, runs LP hedges, computes rewards and
//!    advances to the next step.

mod config;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ConnectivityConfig, EnvConfig, TrendConfig};

use crate::agents::{
    build_lp_observation, build_lt_observation, flow_penalty, hedge_cost_curve, hedge_quantity,
    lp_quote, lp_reward, lt_reward, market_share_penalty, AgentType, Family, FlowTracker, LpAction,
    LpView, LtChoice, LtView, MarketShareTracker, MarketView, VenueCost,
};
use crate::ecn::book::QTY_EPS;
use crate::ecn::{snapshot, EcnEngine, OrderBook};
use crate::market::{AgentId, Counterparty, PnlDeltas, PnlLedger, Quote, ReferencePrices, Side, Trade};
use crate::Result;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("agent {agent}: action out of bounds ({reason})")]
    ActionOutOfBounds { agent: AgentId, reason: String },
    #[error("expected {expected} {family} actions, got {got}")]
    ActionCount {
        family: Family,
        expected: usize,
        got: usize,
    },
    #[error("step called out of order: {0}")]
    Phase(&'static str),
}

/// Which LT population an agent was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LtGroup {
    Flow,
    Pnl,
}

impl std::fmt::Display for LtGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LtGroup::Flow => "flow",
            LtGroup::Pnl => "pnl",
        })
    }
}

/// Edges of the trading graph for one episode. LP to ECN is always on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityGraph {
    /// `lt_lp[j][i]`: LT `j` can trade with LP `i`.
    pub lt_lp: Vec<Vec<bool>>,
    pub lt_ecn: Vec<bool>,
}

impl ConnectivityGraph {
    pub fn complete(n_lt: usize, n_lp: usize) -> Self {
        ConnectivityGraph {
            lt_lp: vec![vec![true; n_lp]; n_lt],
            lt_ecn: vec![true; n_lt],
        }
    }

    /// Edge `(j, i)` is on with LP `i`'s probability `lp_probs[i]`, or with
    /// `lt_override[j]` when that is set.
    pub fn sample<R: Rng + ?Sized>(
        lp_probs: &[f64],
        lt_override: &[Option<f64>],
        lt_ecn: f64,
        rng: &mut R,
    ) -> Self {
        let n_lt = lt_override.len();
        let mut lt_lp = Vec::with_capacity(n_lt);
        let mut ecn = Vec::with_capacity(n_lt);
        for o in lt_override {
            lt_lp.push(lp_probs.iter().map(|p| rng.random::<f64>() < o.unwrap_or(*p)).collect());
            ecn.push(rng.random::<f64>() < lt_ecn);
        }
        ConnectivityGraph { lt_lp, lt_ecn: ecn }
    }

    pub fn lp_ecn(&self, _lp: usize) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpStepInfo {
    pub action: LpAction,
    pub quote: Quote,
    /// Client (LT) volume this step; hedges excluded.
    pub client_volume: f64,
    pub hedge_qty: f64,
    pub deltas: PnlDeltas,
    pub inventory: f64,
    pub market_share_penalty: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtStepInfo {
    pub requested: LtChoice,
    /// What was actually traded (`Hold` when no venue was reachable).
    pub executed: LtChoice,
    pub counterparty: Option<Counterparty>,
    pub exec_price: Option<f64>,
    pub deltas: PnlDeltas,
    pub inventory: f64,
    pub flow_penalty: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub t: usize,
    pub reference: ReferencePrices,
    pub lps: Vec<LpStepInfo>,
    pub lts: Vec<LtStepInfo>,
    pub trades: Vec<Trade>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub lp_rewards: Vec<f64>,
    pub lt_rewards: Vec<f64>,
    pub done: bool,
    pub info: StepInfo,
    /// Observations for the next step; empty once done.
    pub next_lp_obs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Idle,
    AwaitQuotes,
    AwaitTrades,
    Done,
}

pub struct Env {
    cfg: EnvConfig,
    engine: Arc<EcnEngine>,
    phase: Phase,
    t: usize,
    lp_types: Vec<AgentType>,
    lt_types: Vec<AgentType>,
    lt_groups: Vec<LtGroup>,
    graph: ConnectivityGraph,
    book: OrderBook,
    anchor_ticks2: i64,
    book_mid: f64,
    /// Accumulated resilience shift of the ECN price grid.
    level_shift: f64,
    /// Reference mid at episode start, which resilience pulls back to.
    fundamental: f64,
    offset: f64,
    reference: ReferencePrices,
    mids: Vec<f64>,
    ledgers: Vec<PnlLedger>,
    ecn_ledger: PnlLedger,
    share: Vec<MarketShareTracker>,
    flow: Vec<FlowTracker>,
    lp_actions: Vec<LpAction>,
    quotes: Vec<Quote>,
    ecn_rng: ChaCha8Rng,
}

impl Env {
    pub fn new(cfg: EnvConfig, engine: Arc<EcnEngine>) -> Result<Self> {
        cfg.validate()?;
        let tick = engine.model().tick_size;
        Ok(Env {
            engine,
            phase: Phase::Idle,
            t: 0,
            lp_types: Vec::new(),
            lt_types: Vec::new(),
            lt_groups: Vec::new(),
            graph: ConnectivityGraph::complete(cfg.n_lt(), cfg.n_lp),
            book: OrderBook::new(tick),
            anchor_ticks2: 0,
            book_mid: 0.0,
            level_shift: 0.0,
            fundamental: 0.0,
            offset: 0.0,
            reference: ReferencePrices::from_best(0.0, 0.0),
            mids: Vec::new(),
            ledgers: Vec::new(),
            ecn_ledger: PnlLedger::default(),
            share: Vec::new(),
            flow: Vec::new(),
            lp_actions: Vec::new(),
            quotes: Vec::new(),
            ecn_rng: ChaCha8Rng::seed_from_u64(0),
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn n_lp(&self) -> usize {
        self.cfg.n_lp
    }

    pub fn n_lt(&self) -> usize {
        self.cfg.n_lt()
    }

    /// Global id of LT `j`; LPs occupy ids `0..n_lp`.
    pub fn lt_id(&self, j: usize) -> AgentId {
        self.cfg.n_lp + j
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn lp_types(&self) -> &[AgentType] {
        &self.lp_types
    }

    pub fn lt_types(&self) -> &[AgentType] {
        &self.lt_types
    }

    pub fn lt_groups(&self) -> &[LtGroup] {
        &self.lt_groups
    }

    pub fn graph(&self) -> &ConnectivityGraph {
        &self.graph
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn reference(&self) -> ReferencePrices {
        self.reference
    }

    pub fn ledger(&self, id: AgentId) -> &PnlLedger {
        &self.ledgers[id]
    }

    pub fn ecn_ledger(&self) -> &PnlLedger {
        &self.ecn_ledger
    }

    pub fn market_share(&self, lp: usize) -> f64 {
        self.share[lp].share()
    }

    pub fn flow_frequencies(&self, lt: usize) -> [f64; 3] {
        self.flow[lt].frequencies()
    }

    /// Starts an episode: types, connectivity and initial book are drawn
    /// from `seed`, then the first market update runs. Returns the LP
    /// observations for step 0.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let mut ecn_rng = ChaCha8Rng::seed_from_u64(seed);
        ecn_rng.set_stream(1);
        let cfg = &self.cfg;

        let mut lp_types = Vec::with_capacity(cfg.n_lp);
        for _ in 0..cfg.n_lp {
            let mut ty = cfg.lp_types.sample(Family::Lp, &mut rng)?;
            ty.connect_prob_lt = cfg.connectivity.lp_lt.sample(&mut rng);
            ty.connect_prob_ecn = 1.0;
            lp_types.push(ty);
        }
        let lp_probs: Vec<f64> = lp_types.iter().map(|t| t.connect_prob_lt).collect();
        let mean_lp_prob = if lp_probs.is_empty() {
            0.0
        } else {
            lp_probs.iter().sum::<f64>() / lp_probs.len() as f64
        };
        let mut lt_types = Vec::with_capacity(cfg.n_lt());
        let mut lt_groups = Vec::with_capacity(cfg.n_lt());
        for (group, dist, count) in [
            (LtGroup::Flow, &cfg.lt_flow_types, cfg.n_lt_flow),
            (LtGroup::Pnl, &cfg.lt_pnl_types, cfg.n_lt_pnl),
        ] {
            for _ in 0..count {
                let mut ty = dist.sample(Family::Lt, &mut rng)?;
                ty.connect_prob_lp = match group {
                    LtGroup::Pnl => cfg.connectivity.pnl_lt_lp.unwrap_or(mean_lp_prob),
                    LtGroup::Flow => mean_lp_prob,
                };
                ty.connect_prob_ecn = cfg.connectivity.lt_ecn;
                lt_types.push(ty);
                lt_groups.push(group);
            }
        }
        let overrides: Vec<Option<f64>> = lt_groups
            .iter()
            .map(|g| match g {
                LtGroup::Pnl => cfg.connectivity.pnl_lt_lp,
                LtGroup::Flow => None,
            })
            .collect();
        self.graph = ConnectivityGraph::sample(&lp_probs, &overrides, cfg.connectivity.lt_ecn, &mut rng);

        self.book = self.engine.sample_initial_book(&mut ecn_rng)?;
        self.anchor_ticks2 = self.book.mid_ticks2().expect("fresh book has both sides");
        let n_agents = cfg.n_lp + cfg.n_lt();
        self.ledgers = vec![PnlLedger::default(); n_agents];
        self.ecn_ledger = PnlLedger::default();
        self.share = lp_types
            .iter()
            .map(|t| MarketShareTracker::new(t.market_share_target.unwrap_or(0.0)))
            .collect();
        self.flow = vec![FlowTracker::default(); cfg.n_lt()];
        self.lp_types = lp_types;
        self.lt_types = lt_types;
        self.lt_groups = lt_groups;
        self.mids.clear();
        self.lp_actions.clear();
        self.quotes.clear();
        self.ecn_rng = ecn_rng;
        self.t = 0;
        self.advance_market()?;
        self.phase = Phase::AwaitQuotes;
        Ok(self.lp_observations())
    }

    fn advance_market(&mut self) -> Result<()> {
        self.engine
            .evolve_book(&mut self.book, self.anchor_ticks2, &mut self.ecn_rng);
        self.engine
            .refill_empty_sides(&mut self.book, self.anchor_ticks2, &mut self.ecn_rng)?;
        let book_ref = self.book.mid_and_spreads()?;
        self.anchor_ticks2 = self.book.mid_ticks2().expect("both sides present");
        self.book_mid = book_ref.p_mid;
        if self.t == 0 {
            self.level_shift = 0.0;
            self.fundamental = book_ref.p_mid;
        } else {
            let gap = book_ref.p_mid + self.level_shift - self.fundamental;
            self.level_shift -= self.cfg.mid_reversion * gap;
        }
        self.offset = self.level_shift + self.cfg.trend.offset(self.t, self.cfg.episode_len);
        self.reference = book_ref.shifted(self.offset);
        let mid = self.reference.p_mid;
        for l in self.ledgers.iter_mut().chain(std::iter::once(&mut self.ecn_ledger)) {
            l.begin_step();
            l.mark(mid);
        }
        self.mids.push(mid);
        Ok(())
    }

    fn market_view<'a>(&'a self, volumes: &'a [f64]) -> MarketView<'a> {
        MarketView {
            t: self.t,
            episode_len: self.cfg.episode_len,
            mids: &self.mids,
            reference: self.reference,
            book_volumes: volumes,
        }
    }

    fn book_volumes(&self) -> Vec<f64> {
        snapshot(&self.book, self.cfg.observation.levels, self.anchor_ticks2).to_vector()
    }

    pub fn lp_observations(&self) -> Vec<Vec<f64>> {
        let volumes = self.book_volumes();
        (0..self.cfg.n_lp)
            .map(|i| {
                let z = self.ledgers[i].inventory;
                let view = LpView {
                    market: self.market_view(&volumes),
                    inventory: z,
                    prev_share: self.share[i].share(),
                    hedge_costs: hedge_cost_curve(&self.book, z, self.book_mid),
                    ty: &self.lp_types[i],
                };
                build_lp_observation(&view, &self.cfg.observation)
            })
            .collect()
    }

    /// Unit buy and sell cost on the ECN relative to the mid, if a full unit
    /// is available on both sides.
    fn ecn_unit_cost(&self) -> VenueCost {
        let (qb, pb) = self.book.market_impact(Side::Buy, 1.0);
        let (qs, ps) = self.book.market_impact(Side::Sell, 1.0);
        match (pb, ps) {
            (Some(pb), Some(ps)) if qb >= 1.0 - QTY_EPS && qs >= 1.0 - QTY_EPS => {
                Some((pb - self.book_mid, self.book_mid - ps))
            }
            _ => None,
        }
    }

    pub fn lt_observations(&self) -> Vec<Vec<f64>> {
        let volumes = self.book_volumes();
        let ecn = self.ecn_unit_cost();
        let mid = self.reference.p_mid;
        (0..self.n_lt())
            .map(|j| {
                let lp_costs: Vec<VenueCost> = self
                    .quotes
                    .iter()
                    .zip(&self.graph.lt_lp[j])
                    .map(|(q, &on)| on.then(|| (q.ask_price - mid, mid - q.bid_price)))
                    .collect();
                let view = LtView {
                    market: self.market_view(&volumes),
                    inventory: self.ledgers[self.lt_id(j)].inventory,
                    frequencies: self.flow[j].frequencies(),
                    lp_costs: &lp_costs,
                    ecn_cost: if self.graph.lt_ecn[j] { ecn } else { None },
                    ty: &self.lt_types[j],
                };
                build_lt_observation(&view, &self.cfg.observation)
            })
            .collect()
    }

    /// Publishes LP quotes for the current step and returns LT observations.
    pub fn quote(&mut self, actions: &[LpAction]) -> Result<Vec<Vec<f64>>> {
        if self.phase != Phase::AwaitQuotes {
            return Err(EnvError::Phase("quote expects a fresh step").into());
        }
        if actions.len() != self.cfg.n_lp {
            return Err(EnvError::ActionCount {
                family: Family::Lp,
                expected: self.cfg.n_lp,
                got: actions.len(),
            }
            .into());
        }
        for (i, a) in actions.iter().enumerate() {
            if !self.cfg.bounds.contains(a) {
                return Err(EnvError::ActionOutOfBounds {
                    agent: i,
                    reason: format!("{a:?}"),
                }
                .into());
            }
        }
        self.lp_actions = actions.to_vec();
        self.quotes = actions.iter().map(|a| lp_quote(a, &self.reference)).collect();
        self.phase = Phase::AwaitTrades;
        Ok(self.lt_observations())
    }

    /// Best connected venue for LT `j` on `side`: LPs in id order, ECN last,
    /// strictly better prices only.
    fn route(&self, j: usize, side: Side) -> Option<(Counterparty, f64)> {
        let better = |p: f64, best: f64| match side {
            Side::Buy => p < best,
            Side::Sell => p > best,
        };
        let mut best: Option<(Counterparty, f64)> = None;
        for (i, q) in self.quotes.iter().enumerate() {
            if !self.graph.lt_lp[j][i] {
                continue;
            }
            let p = q.price_for(side);
            if best.is_none_or(|(_, b)| better(p, b)) {
                best = Some((Counterparty::Agent(i), p));
            }
        }
        if self.graph.lt_ecn[j] {
            if let (q, Some(vwap)) = self.book.market_impact(side, 1.0) {
                let p = vwap + self.offset;
                if q >= 1.0 - QTY_EPS && best.is_none_or(|(_, b)| better(p, b)) {
                    best = Some((Counterparty::Ecn, p));
                }
            }
        }
        best
    }

    fn book_trade(&mut self, trade: Trade) -> Result<()> {
        let mid = self.reference.p_mid;
        for who in [trade.aggressor, trade.passive] {
            let ledger = match who {
                Counterparty::Agent(id) => &mut self.ledgers[id],
                Counterparty::Ecn => &mut self.ecn_ledger,
            };
            ledger.apply_trade(&trade, who, mid)?;
        }
        Ok(())
    }

    /// Market order on the ECN; each fill becomes a trade at the book price
    /// plus the current price offset (resilience shift and trend).
    fn trade_on_ecn(&mut self, who: AgentId, side: Side, qty: f64, trades: &mut Vec<Trade>) -> Result<f64> {
        let exec = self.book.submit_market(side, qty, Counterparty::Agent(who))?;
        for f in &exec.fills {
            let trade = Trade {
                side,
                qty: f.qty,
                exec_price: f.price + self.offset,
                aggressor: Counterparty::Agent(who),
                passive: Counterparty::Ecn,
                step: self.t,
            };
            self.book_trade(trade)?;
            trades.push(trade);
        }
        Ok(exec.executed)
    }

    /// Routes LT orders, hedges LP inventory, computes rewards and moves to
    /// the next step.
    pub fn trade(&mut self, choices: &[LtChoice]) -> Result<StepOutcome> {
        if self.phase != Phase::AwaitTrades {
            return Err(EnvError::Phase("trade expects quotes first").into());
        }
        let n_lt = self.n_lt();
        if choices.len() != n_lt {
            return Err(EnvError::ActionCount {
                family: Family::Lt,
                expected: n_lt,
                got: choices.len(),
            }
            .into());
        }
        let n_lp = self.cfg.n_lp;
        let mut trades = Vec::new();
        let mut client_volume = vec![0.0; n_lp];
        let mut lt_exec = Vec::with_capacity(n_lt);

        for (j, &choice) in choices.iter().enumerate() {
            let id = self.lt_id(j);
            let routed = choice.side().and_then(|side| self.route(j, side).map(|r| (side, r)));
            let (executed, counterparty, price) = match routed {
                None => (LtChoice::Hold, None, None),
                Some((side, (Counterparty::Agent(i), p))) => {
                    let trade = Trade {
                        side,
                        qty: 1.0,
                        exec_price: p,
                        aggressor: Counterparty::Agent(id),
                        passive: Counterparty::Agent(i),
                        step: self.t,
                    };
                    self.book_trade(trade)?;
                    trades.push(trade);
                    client_volume[i] += 1.0;
                    (choice, Some(Counterparty::Agent(i)), Some(p))
                }
                Some((side, (Counterparty::Ecn, _))) => {
                    let start = trades.len();
                    let q = self.trade_on_ecn(id, side, 1.0, &mut trades)?;
                    let notional: f64 = trades[start..].iter().map(|t| t.qty * t.exec_price).sum();
                    (choice, Some(Counterparty::Ecn), Some(notional / q))
                }
            };
            self.flow[j].record(executed);
            lt_exec.push((executed, counterparty, price));
        }

        let mut hedges = vec![0.0; n_lp];
        for (i, hedge) in hedges.iter_mut().enumerate() {
            let z = self.ledgers[i].inventory;
            let qty = hedge_quantity(self.lp_actions[i].hedge_fraction, z);
            if qty > QTY_EPS {
                let side = if z > 0.0 { Side::Sell } else { Side::Buy };
                *hedge = self.trade_on_ecn(i, side, qty, &mut trades)?;
            }
        }

        let total_client: f64 = client_volume.iter().sum();
        let mut lps = Vec::with_capacity(n_lp);
        for i in 0..n_lp {
            let ty = &self.lp_types[i];
            let deltas = self.ledgers[i].last_step_deltas();
            let m_star = ty.market_share_target.unwrap_or(0.0);
            let ms = market_share_penalty(&mut self.share[i], m_star, client_volume[i], total_client);
            lps.push(LpStepInfo {
                action: self.lp_actions[i],
                quote: self.quotes[i],
                client_volume: client_volume[i],
                hedge_qty: hedges[i],
                deltas,
                inventory: self.ledgers[i].inventory,
                market_share_penalty: ms,
                reward: lp_reward(ty, &deltas, ms),
            });
        }
        let mut lts = Vec::with_capacity(n_lt);
        for (j, (executed, counterparty, exec_price)) in lt_exec.into_iter().enumerate() {
            let ty = &self.lt_types[j];
            let ledger = &self.ledgers[self.lt_id(j)];
            let deltas = ledger.last_step_deltas();
            let fp = ty
                .flow_targets
                .map(|q| flow_penalty(&self.flow[j], &q))
                .unwrap_or(0.0);
            lts.push(LtStepInfo {
                requested: choices[j],
                executed,
                counterparty,
                exec_price,
                deltas,
                inventory: ledger.inventory,
                flow_penalty: fp,
                reward: lt_reward(ty, &deltas, fp),
            });
        }

        let info = StepInfo {
            t: self.t,
            reference: self.reference,
            lps,
            lts,
            trades,
        };
        let done = self.t + 1 == self.cfg.episode_len;
        let next_lp_obs = if done {
            self.phase = Phase::Done;
            Vec::new()
        } else {
            self.t += 1;
            self.advance_market()?;
            self.phase = Phase::AwaitQuotes;
            self.lp_observations()
        };
        Ok(StepOutcome {
            lp_rewards: info.lps.iter().map(|l| l.reward).collect(),
            lt_rewards: info.lts.iter().map(|l| l.reward).collect(),
            done,
            info,
            next_lp_obs,
        })
    }

    /// Client volume each LP traded with LTs in `info`'s step.
    pub fn market_share_volumes(info: &StepInfo) -> Vec<f64> {
        info.lps.iter().map(|l| l.client_volume).collect()
    }
}
