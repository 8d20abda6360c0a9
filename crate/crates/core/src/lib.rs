//! Desk-scale simulation of a TDMA massive-MIMO channel-sounding testbed.
//!
//! The crate covers the whole measurement and analysis chain:
//!
//! - [`channel`]: i.i.d. Gaussian, Vandermonde and uniform-phase channel ensembles.
//! - [`capacity`]: log-det capacity and Monte-Carlo capacity curves.
//! - [`sounding`]: m-sequence generation, TDMA slotting and correlation-based
//!   per-link gain estimation.
//! - [`fit`]: grid search of Vandermonde `(d, alpha)` against a target capacity curve.
//! - [`harness`]: end-to-end pipeline plus a controller/unit emulation over TCP.

pub mod capacity;
pub mod channel;
mod error;
pub mod fit;
pub mod harness;
pub mod rng;
pub mod sounding;

pub use error::{Error, Result};
pub use num_complex::Complex64;
