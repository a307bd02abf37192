//! Simulation of downlink jamming against a 5G NR cell.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cellsim;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod jammer;
pub mod link;
pub mod mobility;
pub mod receiver;
pub mod rng;
pub mod ssb;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
