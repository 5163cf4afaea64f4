//! Signal-processing primitives shared by analysis, enhancement and the vocoder.

mod bands;
mod dct;
mod emphasis;
mod mulaw;

pub use bands::{
    band_analyze, band_centers, cepstrum_to_band_powers, energy_gains, energy_of_cepstrum,
    BandSpectrum, Cepstrum, LOG_FLOOR, NB_BANDS, WINDOW_SIZE,
};
pub use dct::{dct_orthonormal, idct_orthonormal};
pub use emphasis::{deemphasis, preemphasis};
pub(crate) use emphasis::{deemphasis_in_place, preemphasis_in_place};
pub use mulaw::{mulaw_decode, mulaw_decode_checked, mulaw_encode, mulaw_max_step, MULAW_ZERO};

use crate::error::{Error, Result};

/// Operating sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;

/// Samples per 10 ms frame.
pub const FRAME_SIZE: usize = 160;

/// Pre-emphasis coefficient used throughout the pipeline.
pub const PREEMPHASIS: f64 = 0.85;

/// Mono PCM at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(AudioBuffer { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    /// Smallest and largest sample, or `None` for an empty buffer.
    pub fn amplitude_range(&self) -> Option<(f64, f64)> {
        if self.samples.is_empty() {
            return None;
        }
        Some(
            self.samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
                    (lo.min(s), hi.max(s))
                }),
        )
    }
}
