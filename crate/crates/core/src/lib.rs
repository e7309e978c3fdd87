//! Fetal ECG extraction from four-channel abdominal recordings.
//!
//! The crate covers the whole offline pipeline: signal conditioning
//! ([`preprocess`]), a small reverse-mode tensor engine ([`nn`]), the 1D
//! CycleGAN with its spectral, temporal and power loss terms ([`cyclegan`]),
//! fQRS detection, extraction metrics and heart-rate variability
//! ([`analysis`]), a synthetic mixture generator that serves as ground truth
//! ([`synth`]) and the on-disk formats ([`io`]).

pub mod analysis;
pub mod cyclegan;
pub mod error;
pub mod io;
pub mod nn;
pub mod preprocess;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
