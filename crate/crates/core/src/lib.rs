//! Multi-agent dealer market simulator.
//!
//! Liquidity providers (LPs) stream two-sided quotes around the mid of a
//! statistically evolved ECN order book; liquidity takers (LTs) buy, sell or
//! hold against the best connected venue. Each family shares one
//! type-conditioned policy trained with PPO.
//!
//! Module map:
//! * [`market`]: prices, trades, PnL accounting
//! * [`ecn`]: order book, Gaussian-mixture book model, synthetic L2 data
//! * [`agents`]: agent types, pricing, rewards, observations
//! * [`env`]: the stochastic game (episode lifecycle and step ordering)
//! * [`rl`]: MLP, policy heads, GAE, PPO, training loop, checkpoints
//! * [`experiments`]: experiment presets, metric rows and analyses

pub mod agents;
pub mod ecn;
pub mod env;
pub mod experiments;
pub mod market;
pub mod rl;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Market(#[from] market::MarketError),
    #[error(transparent)]
    Book(#[from] ecn::BookError),
    #[error(transparent)]
    Mixture(#[from] ecn::MixtureError),
    #[error(transparent)]
    Env(#[from] env::EnvError),
    #[error(transparent)]
    Rl(#[from] rl::RlError),
    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("config: {0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
