//! Band analysis and the cepstral representation built on it.
//!
//! The analysis uses 18 overlapping triangular bands on a Bark-like scale
//! over 0-8 kHz. A cepstrum is the orthonormal DCT-II of the base-10 log
//! band powers, so adding `delta` to `C_0` multiplies every band power by
//! `10^(delta / sqrt(18))`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::dct::{dct_orthonormal, idct_orthonormal};
use super::{PREEMPHASIS, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Number of analysis bands, which is also the cepstrum length.
pub const NB_BANDS: usize = 18;

/// Analysis window length in samples (20 ms).
pub const WINDOW_SIZE: usize = 320;

/// Floor applied to band powers before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

const FFT_BINS: usize = WINDOW_SIZE / 2 + 1;
const BIN_HZ: f64 = SAMPLE_RATE as f64 / WINDOW_SIZE as f64;

/// Band centers as FFT bin indices of the 320-point analysis transform (50 Hz per bin).
const BAND_CENTER_BINS: [usize; NB_BANDS] = [
    2, 4, 8, 13, 20, 27, 34, 43, 52, 61, 71, 82, 93, 105, 117, 130, 143, 156,
];

/// Band center frequencies in Hz.
pub fn band_centers() -> [f64; NB_BANDS] {
    BAND_CENTER_BINS.map(|b| b as f64 * BIN_HZ)
}

/// Triangular weight of FFT bin `bin` in band `band`. The weights form a
/// partition of unity; the first and last bands are flat out to the edges.
fn band_weight(band: usize, bin: usize) -> f64 {
    let c = BAND_CENTER_BINS[band] as f64;
    let k = bin as f64;
    if k <= c {
        if band == 0 {
            return 1.0;
        }
        let lo = BAND_CENTER_BINS[band - 1] as f64;
        if k <= lo {
            0.0
        } else {
            (k - lo) / (c - lo)
        }
    } else {
        if band == NB_BANDS - 1 {
            return 1.0;
        }
        let hi = BAND_CENTER_BINS[band + 1] as f64;
        if k >= hi {
            0.0
        } else {
            (hi - k) / (hi - c)
        }
    }
}

struct BandTables {
    /// `weights[b][k]` for every band and FFT bin.
    weights: Vec<[f64; FFT_BINS]>,
    weight_sums: [f64; NB_BANDS],
    /// Per-band gain used by the energy functional.
    energy_gains: [f64; NB_BANDS],
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

fn tables() -> &'static BandTables {
    static TABLES: OnceLock<BandTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let weights: Vec<[f64; FFT_BINS]> = (0..NB_BANDS)
            .map(|b| {
                let mut row = [0.0; FFT_BINS];
                for (k, w) in row.iter_mut().enumerate() {
                    *w = band_weight(b, k);
                }
                row
            })
            .collect();
        let mut weight_sums = [0.0; NB_BANDS];
        for (b, row) in weights.iter().enumerate() {
            weight_sums[b] = row.iter().sum();
        }
        let centers = band_centers();
        let mut energy_gains = [0.0; NB_BANDS];
        for b in 0..NB_BANDS {
            let width_hz = weight_sums[b] * BIN_HZ;
            let w = 2.0 * PI * centers[b] / SAMPLE_RATE as f64;
            let beta = PREEMPHASIS;
            // |1 - beta e^{-jw}|^2
            let denom = 1.0 - 2.0 * beta * w.cos() + beta * beta;
            energy_gains[b] = width_hz / denom;
        }
        // periodic Hann
        let window = (0..WINDOW_SIZE)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / WINDOW_SIZE as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(WINDOW_SIZE);
        BandTables {
            weights,
            weight_sums,
            energy_gains,
            window,
            fft,
        }
    })
}

/// Inverse pre-emphasis power gain times band width, per band.
pub fn energy_gains() -> [f64; NB_BANDS] {
    tables().energy_gains
}

/// An 18-coefficient cepstrum; `coeffs()[0]` is `C_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cepstrum([f64; NB_BANDS]);

impl Cepstrum {
    pub fn new(coeffs: [f64; NB_BANDS]) -> Result<Self> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "cepstral coefficient {i} is not finite"
            )));
        }
        Ok(Cepstrum(coeffs))
    }

    pub fn from_slice(coeffs: &[f64]) -> Result<Self> {
        let arr: [f64; NB_BANDS] = coeffs.try_into().map_err(|_| {
            Error::invalid(format!(
                "cepstrum needs {NB_BANDS} coefficients, got {}",
                coeffs.len()
            ))
        })?;
        Self::new(arr)
    }

    pub fn zero() -> Self {
        Cepstrum([0.0; NB_BANDS])
    }

    pub fn coeffs(&self) -> &[f64; NB_BANDS] {
        &self.0
    }

    /// Cepstrum of a set of band powers (floored at [`LOG_FLOOR`]).
    pub fn from_band_powers(bands: &BandSpectrum) -> Self {
        let logs: Vec<f64> = bands
            .powers
            .iter()
            .map(|p| p.max(LOG_FLOOR).log10())
            .collect();
        let c = dct_orthonormal(&logs).expect("band count is non-zero");
        Cepstrum(c.try_into().expect("dct preserves length"))
    }

    /// Same cepstrum with `C_0` shifted by `delta`.
    pub fn with_c0_offset(mut self, delta: f64) -> Self {
        self.0[0] += delta;
        self
    }
}

/// Linear band powers with their fixed center table.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpectrum {
    pub powers: [f64; NB_BANDS],
}

impl BandSpectrum {
    pub fn centers(&self) -> [f64; NB_BANDS] {
        band_centers()
    }
}

pub fn cepstrum_to_band_powers(c: &Cepstrum) -> BandSpectrum {
    let logs = idct_orthonormal(c.coeffs()).expect("cepstrum is non-empty");
    let mut powers = [0.0; NB_BANDS];
    for (p, l) in powers.iter_mut().zip(logs) {
        *p = 10f64.powf(l);
    }
    BandSpectrum { powers }
}

/// Energy of the signal described by a cepstrum: the band powers weighted by
/// band width and the inverse pre-emphasis gain at each band center, summed.
pub fn energy_of_cepstrum(c: &Cepstrum) -> f64 {
    let gains = energy_gains();
    cepstrum_to_band_powers(c)
        .powers
        .iter()
        .zip(gains.iter())
        .map(|(p, g)| p * g)
        .sum()
}

/// Hann-windowed power spectrum of one 320-sample frame pooled into the
/// 18 triangular bands (weighted mean power per band).
pub fn band_analyze(frame: &[f64]) -> Result<BandSpectrum> {
    if frame.len() != WINDOW_SIZE {
        return Err(Error::invalid(format!(
            "band analysis needs {WINDOW_SIZE} samples, got {}",
            frame.len()
        )));
    }
    let t = tables();
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .zip(t.window.iter())
        .map(|(x, w)| Complex::new(x * w, 0.0))
        .collect();
    t.fft.process(&mut buf);
    let power: Vec<f64> = buf[..FFT_BINS].iter().map(|c| c.norm_sqr()).collect();
    let mut powers = [0.0; NB_BANDS];
    for b in 0..NB_BANDS {
        let acc: f64 = t.weights[b]
            .iter()
            .zip(power.iter())
            .map(|(w, p)| w * p)
            .sum();
        powers[b] = acc / t.weight_sums[b];
    }
    Ok(BandSpectrum { powers })
}
