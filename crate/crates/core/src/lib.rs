//! Source clock frequency recovery for aperiodic packet streams.
//!
//! The crate is split into the pieces of a clock-recovery experiment:
//!
//! * [`clock`]: oscillators, wrapping counters and modular tick arithmetic.
//! * [`traffic`]: packet departure schedules and source timestamping.
//! * [`channel`]: delay/jitter models mapping departures to arrivals.
//! * [`estimators`]: cumulative-ratio, recursive least squares,
//!   instantaneous-ratio and PLL frequency-ratio estimators, plus DCO
//!   clock synthesis.
//! * [`analysis`]: error metrics, noise spectra, convergence and bias tests.
//! * [`experiment`]: scenario configuration, runs, CSV output and plots.

// NaN-rejecting checks are written as negated comparisons on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod clock;
pub mod estimators;
pub mod experiment;
pub mod traffic;
