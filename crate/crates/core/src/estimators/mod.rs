//! Streaming clock-frequency-ratio estimators.
//!
//! Every estimator consumes the differenced representation produced by
//! [`RtoTracker`]: per-packet interarrival and interdeparture tick counts
//! plus their running sums since the first packet. The ratio they estimate
//! is `R = f_r / f_s`, receiver ticks per source tick.
//!
//! * [`CrState`]: cumulative ratio `Σiat / Σidt`, kept in integers.
//! * [`RlsState`]: recursive least squares on `t̃_r = R·t̃_s`.
//! * [`IrState`]: instantaneous ratio `iat / idt` of the latest packet.
//! * [`PllState`]: PI phase-locked loop baseline driven by arrival times.
//! * [`Dco`]: clock synthesis from a ratio estimate.

mod cr;
mod dco;
mod ir;
mod pll;
mod rls;
mod rto;

pub use cr::CrState;
pub use dco::{Dco, DcoOutput, MIN_OVERSAMPLING};
pub use ir::{ir_ratio, IrState};
pub use pll::{PllConfig, PllState};
pub use rls::{rls_batch_oracle, RlsState, DEFAULT_RLS_P0, DEFAULT_RLS_R0};
pub use rto::{to_rto_samples, RtoSample, RtoTracker};

use thiserror::Error;

use crate::clock::ClockError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error("RLS gain P(0) must be positive and finite, got {0}")]
    NonPositiveGain(f64),
    #[error("arrival time {curr} s does not follow previous arrival {prev} s")]
    NonIncreasingArrival { prev: f64, curr: f64 },
    #[error("frequency ratio estimate must be positive and finite, got {0}")]
    InvalidRatio(f64),
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
}

/// Common surface of the ratio estimators that work on [`RtoSample`]s.
pub trait RatioEstimator {
    /// Folds one sample in and returns the new estimate, if one is defined.
    fn update(&mut self, sample: &RtoSample) -> Option<f64>;

    /// The current estimate without changing state.
    fn estimate(&self) -> Option<f64>;
}
