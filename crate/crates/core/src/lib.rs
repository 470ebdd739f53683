//! Simulation and analysis toolkit for NV-ensemble DC magnetometry.
//!
//! * [`kinetics`]: eight-level photo/spin kinetics, integration, steady states.
//! * [`mwsignal`]: FM/PM/AM microwave modulation models.
//! * [`odmr`]: CW-ODMR linewidths, spectra, lock-in spectra, frequency response.
//! * [`lockin`]: digital lock-in amplifier and CE-Ramsey scheduling.
//! * [`sensitivity`]: shot-noise estimators, readout contrast, optimizer.
//! * [`analysis`]: detrending, noise spectra, calibration tones, gradiometry.

// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fit;
pub mod kinetics;
pub mod lockin;
pub mod mwsignal;
pub mod odmr;
pub mod sensitivity;
pub mod trace;
pub mod units;

pub use error::{Error, Result};
pub use trace::{SignalUnit, TimeTrace};
