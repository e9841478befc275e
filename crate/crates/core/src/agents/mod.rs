//! Agent types, LP pricing, rewards and observation builders.

pub mod observation;
pub mod pricing;
pub mod reward;
pub mod types;

pub use observation::{
    build_lp_observation, build_lt_observation, hedge_cost_curve, hedge_quantity, LpView,
    LtView, MarketView, ObservationConfig, VenueCost, HEDGE_GRID, SENTINEL_SPREADS,
};
pub use pricing::{lp_quote, normalized_tweak, ActionBounds, LpAction};
pub use reward::{
    flow_penalty, lp_reward, lt_reward, market_share_penalty, risk_adjusted_pnl, FlowTracker,
    MarketShareTracker,
};
pub use types::{
    AgentType, Family, FlowTargetDist, FlowTargets, LtChoice, ParamDist, TypeDistribution,
};
