//! Reward functions and the trackers behind their target terms.
//!
//! Both target terms are step differences of a distance to target, so their
//! sum over an episode telescopes to `final distance - initial distance`.

use serde::{Deserialize, Serialize};

use super::types::{AgentType, FlowTargets, LtChoice};
use crate::market::PnlDeltas;

/// `ΔPnL - γ |ΔPnL_inventory|`
pub fn risk_adjusted_pnl(deltas: &PnlDeltas, gamma: f64) -> f64 {
    deltas.total - gamma * deltas.inventory.abs()
}

/// Cumulative client volume of one LP against all LPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketShareTracker {
    pub own_traded_cum: f64,
    pub all_traded_cum: f64,
    /// Distance to target after the previous step; starts at `|0 - m*|`.
    pub prev_distance: f64,
}

impl MarketShareTracker {
    pub fn new(m_star: f64) -> Self {
        MarketShareTracker {
            own_traded_cum: 0.0,
            all_traded_cum: 0.0,
            prev_distance: m_star.abs(),
        }
    }

    /// Empirical share so far (0 before any trade).
    pub fn share(&self) -> f64 {
        if self.all_traded_cum > 0.0 {
            self.own_traded_cum / self.all_traded_cum
        } else {
            0.0
        }
    }
}

/// Adds this step's volumes and returns `Δ|share - m*|`. Negative means the
/// LP moved toward its target. Zero while nobody has traded.
pub fn market_share_penalty(
    tracker: &mut MarketShareTracker,
    m_star: f64,
    own_volume: f64,
    all_volume: f64,
) -> f64 {
    tracker.own_traded_cum += own_volume;
    tracker.all_traded_cum += all_volume;
    if tracker.all_traded_cum <= 0.0 {
        return 0.0;
    }
    let distance = (tracker.share() - m_star).abs();
    let penalty = distance - tracker.prev_distance;
    tracker.prev_distance = distance;
    penalty
}

/// Action counts of one LT.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowTracker {
    pub counts: [u64; 3],
    pub t: u64,
    last: Option<LtChoice>,
}

fn flow_distance(counts: &[u64; 3], t: u64, q: &FlowTargets) -> f64 {
    let n = counts.len() as f64;
    (0..3)
        .map(|j| {
            let freq = if t > 0 { counts[j] as f64 / t as f64 } else { 0.0 };
            (freq - q.0[j]).abs()
        })
        .sum::<f64>()
        / n
}

impl FlowTracker {
    pub fn record(&mut self, choice: LtChoice) {
        self.counts[choice.index()] += 1;
        self.t += 1;
        self.last = Some(choice);
    }

    /// Empirical frequency of each action so far (zeros before any step).
    pub fn frequencies(&self) -> [f64; 3] {
        if self.t == 0 {
            return [0.0; 3];
        }
        self.counts.map(|c| c as f64 / self.t as f64)
    }

    pub fn distance(&self, q: &FlowTargets) -> f64 {
        flow_distance(&self.counts, self.t, q)
    }
}

/// `(1/|A|) Σ_j Δ|freq_j - q*_j|` for the step just recorded.
pub fn flow_penalty(tracker: &FlowTracker, q: &FlowTargets) -> f64 {
    let Some(last) = tracker.last else { return 0.0 };
    let mut prev = tracker.counts;
    prev[last.index()] -= 1;
    flow_distance(&tracker.counts, tracker.t, q) - flow_distance(&prev, tracker.t - 1, q)
}

pub fn lp_reward(ty: &AgentType, deltas: &PnlDeltas, ms_penalty: f64) -> f64 {
    ty.w * ty.alpha * risk_adjusted_pnl(deltas, ty.gamma) - (1.0 - ty.w) * ms_penalty
}

pub fn lt_reward(ty: &AgentType, deltas: &PnlDeltas, flow_penalty: f64) -> f64 {
    ty.w * ty.alpha * risk_adjusted_pnl(deltas, ty.gamma) - (1.0 - ty.w) * flow_penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::types::Family;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    }

    fn deltas(total: f64, inventory: f64) -> PnlDeltas {
        PnlDeltas {
            total,
            inventory,
            spread: total - inventory,
        }
    }

    fn lp_type(w: f64, alpha: f64, gamma: f64) -> AgentType {
        AgentType {
            family: Family::Lp,
            w,
            alpha,
            gamma,
            market_share_target: Some(0.3),
            flow_targets: None,
            connect_prob_lt: 1.0,
            connect_prob_lp: 0.0,
            connect_prob_ecn: 1.0,
        }
    }

    #[test]
    fn risk_adjusted_examples() {
        assert!(close(risk_adjusted_pnl(&deltas(1.0, -0.5), 0.5), 0.75));
        assert_eq!(risk_adjusted_pnl(&deltas(1.3, -0.5), 0.0), 1.3);
        assert!(close(risk_adjusted_pnl(&deltas(0.2, 0.2), 1.0), 0.0));
    }

    #[test]
    fn market_share_two_steps() {
        let mut t = MarketShareTracker::new(0.3);
        // share 0.5 after step one, 0.4 after step two
        market_share_penalty(&mut t, 0.3, 5.0, 10.0);
        assert!(close(t.share(), 0.5));
        let p = market_share_penalty(&mut t, 0.3, 3.0, 10.0);
        assert!(close(t.share(), 0.4));
        assert!(close(p, -0.1));
    }

    #[test]
    fn market_share_first_step_uses_zero_share_distance() {
        let mut t = MarketShareTracker::new(0.5);
        let p = market_share_penalty(&mut t, 0.5, 6.0, 10.0);
        assert!(close(p, -0.4));
    }

    #[test]
    fn market_share_at_target_is_flat() {
        let mut t = MarketShareTracker::new(0.25);
        market_share_penalty(&mut t, 0.25, 1.0, 4.0);
        for _ in 0..5 {
            assert!(close(market_share_penalty(&mut t, 0.25, 2.0, 8.0), 0.0));
        }
    }

    #[test]
    fn market_share_no_trades_is_zero() {
        let mut t = MarketShareTracker::new(0.4);
        assert_eq!(market_share_penalty(&mut t, 0.4, 0.0, 0.0), 0.0);
        assert_eq!(t.prev_distance, 0.4);
    }

    #[test]
    fn flow_penalty_hand_walk() {
        let q = FlowTargets::new(0.25, 0.75, 0.0).unwrap();
        let mut f = FlowTracker::default();
        assert_eq!(flow_penalty(&f, &q), 0.0);
        f.record(LtChoice::Sell);
        assert!(close(f.distance(&q), 0.5));
        f.record(LtChoice::Buy);
        assert!(close(f.distance(&q), 1.0 / 6.0));
        assert!(close(flow_penalty(&f, &q), 1.0 / 6.0 - 0.5));
    }

    #[test]
    fn flow_penalty_rewards_returning_to_target() {
        let q = FlowTargets::new(0.5, 0.5, 0.0).unwrap();
        let mut f = FlowTracker::default();
        f.record(LtChoice::Sell);
        f.record(LtChoice::Buy);
        f.record(LtChoice::Sell);
        // (2/3, 1/3, 0) is 1/9 away; one more buy lands on target
        f.record(LtChoice::Buy);
        assert!(close(f.distance(&q), 0.0));
        assert!(close(flow_penalty(&f, &q), -1.0 / 9.0));
    }

    #[test]
    fn repeated_target_action_never_penalized() {
        let q = FlowTargets::new(0.0, 1.0, 0.0).unwrap();
        let mut f = FlowTracker::default();
        for _ in 0..20 {
            f.record(LtChoice::Buy);
            assert!(flow_penalty(&f, &q) <= 1e-15);
        }
    }

    #[test]
    fn reward_examples() {
        let d = deltas(0.75, 0.0);
        assert!(close(lp_reward(&lp_type(1.0, 1.0, 0.0), &d, 0.3), 0.75));
        assert!(close(lp_reward(&lp_type(0.0, 1.0, 0.0), &d, 0.3), -0.3));
        assert!(close(lp_reward(&lp_type(0.5, 1.0, 0.0), &d, -0.1), 0.425));
        let mut lt = lp_type(0.0, 1.0, 0.0);
        lt.family = Family::Lt;
        assert!(close(lt_reward(&lt, &d, 0.2), -0.2));
        lt.w = 1.0;
        assert!(close(lt_reward(&lt, &deltas(0.4, -0.3), 0.2), 0.4));
        lt.w = 0.25;
        lt.alpha = 2.0;
        lt.gamma = 0.5;
        // 0.25 * 2 * (0.4 - 0.15) - 0.75 * 0.2
        assert!(close(lt_reward(&lt, &deltas(0.4, -0.3), 0.2), -0.025));
    }

    proptest! {
        #[test]
        fn alpha_scales_only_pnl_term(
            w in 0.0f64..1.0, a in 0.1f64..10.0, c in 0.1f64..10.0,
            g in 0.0f64..1.0, tot in -5.0f64..5.0, inv in -5.0f64..5.0, ms in -1.0f64..1.0,
        ) {
            let d = deltas(tot, inv);
            let base = lp_type(w, a, g);
            let scaled = lp_type(w, a * c, g);
            let pnl_term = w * a * risk_adjusted_pnl(&d, g);
            let expect = c * pnl_term - (1.0 - w) * ms;
            prop_assert!((lp_reward(&scaled, &d, ms) - expect).abs() < 1e-9 * (1.0 + expect.abs()));
            prop_assert!((lp_reward(&base, &d, ms) - (pnl_term - (1.0 - w) * ms)).abs() < 1e-12 * (1.0 + pnl_term.abs()));
        }

        #[test]
        fn flow_penalty_telescopes(actions in proptest::collection::vec(0usize..3, 1..60),
                                   s in 0.0f64..1.0, b in 0.0f64..1.0) {
            let q = FlowTargets::new(s, b, 0.2).unwrap();
            let mut f = FlowTracker::default();
            let start = f.distance(&q);
            let mut sum = 0.0;
            for a in actions {
                f.record(LtChoice::from_index(a).unwrap());
                sum += flow_penalty(&f, &q);
            }
            prop_assert!((sum - (f.distance(&q) - start)).abs() < 1e-9);
        }

        #[test]
        fn market_share_telescopes(vols in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..60),
                                   m in 0.0f64..1.0) {
            let mut t = MarketShareTracker::new(m);
            let mut sum = 0.0;
            for (own, other) in vols {
                sum += market_share_penalty(&mut t, m, own, own + other);
            }
            let end = if t.all_traded_cum > 0.0 { (t.share() - m).abs() } else { m };
            prop_assert!((sum - (end - m)).abs() < 1e-9);
        }
    }
}
