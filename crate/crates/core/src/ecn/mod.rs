//! The ECN: a FIFO limit order book evolved by a statistical model.

pub mod book;
pub mod mixture;
pub mod model;
pub mod synth;

pub use book::{BookError, Fill, LimitResult, MarketExecution, OrderBook, OrderId};
pub use mixture::{ConditionalSampler, FitReport, GaussianMixture, MixtureError};
pub use model::{
    calibrate, snapshot, AppliedOrder, BookSnapshot, Calibration, CalibrationConfig, EcnEngine,
    EcnModel, VolumeProcess,
};
pub use synth::{read_snapshots, synth_l2_dataset, write_snapshots, SynthConfig};
