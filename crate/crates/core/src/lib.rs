//! Stack-light monitoring core.
//!
//! Detects signal-light towers in factory frames, classifies which lamps are
//! lit and turns the result into per-machine operating-state ledgers. The
//! crate is `no_std` (it needs `alloc`) so it can be embedded next to a camera
//! driver; file formats and the command-line front end live in
//! `stacklight-cli`.
//!
//! Pipeline stages:
//!
//! 1. [`imaging`] – raster type, bicubic resampling, HSV conversion.
//! 2. [`detect`] – 1248×832 working frame split into six 416×416 tiles,
//!    classical spot-light detector per tile, non-maximal suppression.
//! 3. [`classify`] – 227×227 crop normalisation, colour-histogram features,
//!    softmax classifier trained with SGD+momentum or Adam, temporal smoothing.
//! 4. [`tracker`] – light combination → machine state, duration ledger, alarms.
//!
//! [`synth`] renders ground-truth scenes, [`perturb`] degrades crops and
//! [`eval`] holds the metrics and experiment harness.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classify;
pub mod detect;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod label;
pub mod perturb;
pub mod seed;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use imaging::{BoundingBox, ColorSpace, Image};
pub use label::LightCombination;
