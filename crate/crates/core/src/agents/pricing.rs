//! LP pricing: quotes as symmetric/asymmetric tweaks of the ECN spread.

use serde::{Deserialize, Serialize};

use crate::market::{Quote, ReferencePrices};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LpAction {
    pub eps_sym: f64,
    pub eps_asym: f64,
    pub hedge_fraction: f64,
}

impl LpAction {
    pub fn new(eps_sym: f64, eps_asym: f64, hedge_fraction: f64) -> Self {
        LpAction {
            eps_sym,
            eps_asym,
            hedge_fraction,
        }
    }
}

/// Closed intervals for the three LP action components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBounds {
    pub eps_sym: [f64; 2],
    pub eps_asym: [f64; 2],
    pub hedge: [f64; 2],
}

impl Default for ActionBounds {
    fn default() -> Self {
        ActionBounds {
            eps_sym: [-1.0, 1.0],
            eps_asym: [-1.0, 1.0],
            hedge: [0.0, 1.0],
        }
    }
}

impl ActionBounds {
    pub fn as_array(&self) -> [[f64; 2]; 3] {
        [self.eps_sym, self.eps_asym, self.hedge]
    }

    pub fn contains(&self, a: &LpAction) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| v >= lo && v <= hi;
        inside(a.eps_sym, self.eps_sym)
            && inside(a.eps_asym, self.eps_asym)
            && inside(a.hedge_fraction, self.hedge)
    }
}

/// `ε = ½ ε_sym + ε_asym`; negative means better-than-ECN prices.
pub fn normalized_tweak(action: &LpAction) -> f64 {
    0.5 * action.eps_sym + action.eps_asym
}

/// Ask and bid around the ECN mid, scaled by the full reference spread.
pub fn lp_quote(action: &LpAction, reference: &ReferencePrices) -> Quote {
    let total = reference.total_spread();
    let half = 0.5 * (1.0 + action.eps_sym);
    Quote {
        ask_price: reference.p_mid + total * (half + action.eps_asym),
        bid_price: reference.p_mid - total * (half - action.eps_asym),
        quote_size: f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym_ref() -> ReferencePrices {
        ReferencePrices {
            p_mid: 100.0,
            s_ref_bid: 0.5,
            s_ref_ask: 0.5,
        }
    }

    #[test]
    fn zero_tweak_matches_ecn() {
        let q = lp_quote(&LpAction::default(), &sym_ref());
        assert_eq!((q.bid_price, q.ask_price), (99.5, 100.5));
    }

    #[test]
    fn full_negative_sym_collapses_to_mid() {
        let q = lp_quote(&LpAction::new(-1.0, 0.0, 0.0), &sym_ref());
        assert_eq!((q.bid_price, q.ask_price), (100.0, 100.0));
    }

    #[test]
    fn asymmetric_tweak_shifts_both_sides() {
        let q = lp_quote(&LpAction::new(0.0, 0.25, 0.0), &sym_ref());
        assert!((q.ask_price - 100.75).abs() < 1e-12);
        assert!((q.bid_price - 99.75).abs() < 1e-12);
    }

    #[test]
    fn normalized_tweak_examples() {
        assert_eq!(normalized_tweak(&LpAction::new(0.0, 0.0, 0.0)), 0.0);
        assert_eq!(normalized_tweak(&LpAction::new(-1.0, 0.0, 0.0)), -0.5);
        assert!((normalized_tweak(&LpAction::new(0.2, -0.3, 0.0)) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn bounds_check() {
        let b = ActionBounds::default();
        assert!(b.contains(&LpAction::new(-1.0, 1.0, 0.0)));
        assert!(!b.contains(&LpAction::new(-1.01, 0.0, 0.0)));
        assert!(!b.contains(&LpAction::new(0.0, 0.0, 1.5)));
    }

    proptest! {
        #[test]
        fn quote_identities(
            mid in 1.0f64..1000.0,
            sb in 0.0f64..5.0,
            sa in 0.0f64..5.0,
            es in -1.0f64..1.0,
            ea in -1.0f64..1.0,
        ) {
            let r = ReferencePrices { p_mid: mid, s_ref_bid: sb, s_ref_ask: sa };
            let q = lp_quote(&LpAction::new(es, ea, 0.0), &r);
            let total = sb + sa;
            let tol = 1e-9 * mid;
            prop_assert!(((q.ask_price + q.bid_price) / 2.0 - mid - total * ea).abs() <= tol);
            prop_assert!((q.ask_price - q.bid_price - total * (1.0 + es)).abs() <= tol);
            prop_assert!(q.ask_price >= q.bid_price - tol);
        }
    }
}
