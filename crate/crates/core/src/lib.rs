//! Signal-to-noise analysis of a single leaky integrate-and-fire
//! coincidence detector listening to a jittered, repeating spike pattern
//! embedded in Poisson noise, plus an STDP learning engine that drives
//! the detector toward the analytic optimum.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod lif;
pub mod optimizer;
pub mod rng;
pub mod spikes;
pub mod stdp;
pub mod validation;

pub use error::{Error, Result};
