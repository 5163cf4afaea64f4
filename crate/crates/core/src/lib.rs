//! CPU real-time speech synthesis back-end.
//!
//! The pipeline runs prosody units through a frame resampler, an acoustic
//! network that predicts static and delta features, a maximum-likelihood
//! trajectory solver, a cepstral formant enhancer, and finally an
//! LPC-residual neural vocoder that emits 16 kHz audio.

pub mod acoustic;
pub mod cli;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod features;
pub mod io;
pub mod mlpg;
pub mod prosody;
pub mod trainer;
pub mod vocoder;

pub use error::{Error, Result};
