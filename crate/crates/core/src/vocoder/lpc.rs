//! Linear prediction: Levinson-Durbin recursion and the cepstrum-to-LPC path.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::dsp::{band_centers, cepstrum_to_band_powers, Cepstrum, NB_BANDS};
use crate::error::{Error, Result};

/// Prediction order.
pub const LPC_ORDER: usize = 16;

/// Linear-frequency bins used to rebuild the power spectrum (Nyquist excluded).
const SPECTRUM_BINS: usize = 128;

/// White-noise correction applied to `r[0]`.
const NOISE_FLOOR: f64 = 1.0001;

/// Order-16 predictor in the convention `s[n] ≈ Σ a[k-1] s[n-k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpcFilter {
    pub a: [f64; LPC_ORDER],
    pub reflection: [f64; LPC_ORDER],
    /// Prediction error after each order, `prediction_error[0] == r[0]`.
    pub prediction_error: [f64; LPC_ORDER + 1],
}

impl LpcFilter {
    /// The all-zero predictor.
    pub fn zero() -> Self {
        LpcFilter {
            a: [0.0; LPC_ORDER],
            reflection: [0.0; LPC_ORDER],
            prediction_error: [0.0; LPC_ORDER + 1],
        }
    }

    pub fn is_stable(&self) -> bool {
        self.reflection.iter().all(|k| k.abs() < 1.0)
    }

    /// Prediction from a history where `history[0]` is the previous sample.
    #[inline]
    pub fn predict(&self, history: &[f64; LPC_ORDER]) -> f64 {
        self.a.iter().zip(history).map(|(a, s)| a * s).sum()
    }
}

/// Sliding window of the last `LPC_ORDER` reconstructed samples.
#[derive(Debug, Clone, Default)]
pub struct LpcHistory {
    past: [f64; LPC_ORDER],
}

impl LpcHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[f64; LPC_ORDER] {
        &self.past
    }

    #[inline]
    pub fn push(&mut self, s: f64) {
        self.past.copy_within(0..LPC_ORDER - 1, 1);
        self.past[0] = s;
    }
}

/// Order-16 Levinson-Durbin recursion over `r[0..=16]`.
///
/// If the error reaches zero before order 16 (a perfectly predictable
/// input) the remaining coefficients stay zero.
pub fn levinson_durbin(r: &[f64]) -> Result<LpcFilter> {
    if r.len() != LPC_ORDER + 1 {
        return Err(Error::invalid(format!(
            "levinson-durbin needs {} autocorrelation values, got {}",
            LPC_ORDER + 1,
            r.len()
        )));
    }
    if !(r[0] > 0.0) || r.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "autocorrelation r[0] = {} must be positive",
            r[0]
        )));
    }
    let mut out = LpcFilter::zero();
    let mut err = r[0];
    out.prediction_error[0] = err;
    let mut prev = [0.0; LPC_ORDER];
    for i in 0..LPC_ORDER {
        if err <= 0.0 {
            out.prediction_error[i + 1] = 0.0;
            continue;
        }
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= out.a[j] * r[i - j];
        }
        let k = acc / err;
        prev[..i].copy_from_slice(&out.a[..i]);
        for j in 0..i {
            out.a[j] = prev[j] - k * prev[i - 1 - j];
        }
        out.a[i] = k;
        out.reflection[i] = k;
        err *= 1.0 - k * k;
        out.prediction_error[i + 1] = err;
    }
    Ok(out)
}

fn cos_table() -> &'static Vec<[f64; SPECTRUM_BINS + 1]> {
    static TABLE: OnceLock<Vec<[f64; SPECTRUM_BINS + 1]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=LPC_ORDER)
            .map(|lag| {
                let mut row = [0.0; SPECTRUM_BINS + 1];
                for (k, v) in row.iter_mut().enumerate() {
                    *v = (2.0 * PI * (k * lag) as f64 / (2 * SPECTRUM_BINS) as f64).cos();
                }
                row
            })
            .collect()
    })
}

/// Log10 band powers interpolated piecewise-linearly onto linear-frequency
/// bins `k * 62.5 Hz`, `k = 0..=128`, held flat outside the band centers.
pub(crate) fn interpolate_log_spectrum(log_bands: &[f64; NB_BANDS]) -> [f64; SPECTRUM_BINS + 1] {
    let centers = band_centers();
    let bin_hz = 8000.0 / SPECTRUM_BINS as f64;
    let mut out = [0.0; SPECTRUM_BINS + 1];
    let mut band = 0;
    for (k, v) in out.iter_mut().enumerate() {
        let f = k as f64 * bin_hz;
        if f <= centers[0] {
            *v = log_bands[0];
        } else if f >= centers[NB_BANDS - 1] {
            *v = log_bands[NB_BANDS - 1];
        } else {
            while centers[band + 1] < f {
                band += 1;
            }
            let t = (f - centers[band]) / (centers[band + 1] - centers[band]);
            *v = (1.0 - t) * log_bands[band] + t * log_bands[band + 1];
        }
    }
    out
}

/// Autocorrelation lags 0..=16 of the symmetric 256-point power spectrum
/// whose first 129 entries are `power`.
pub(crate) fn autocorrelation_from_power(power: &[f64; SPECTRUM_BINS + 1]) -> [f64; LPC_ORDER + 1] {
    let table = cos_table();
    let n = (2 * SPECTRUM_BINS) as f64;
    let mut r = [0.0; LPC_ORDER + 1];
    for (lag, rv) in r.iter_mut().enumerate() {
        let c = &table[lag];
        let mut acc = power[0] + power[SPECTRUM_BINS] * c[SPECTRUM_BINS];
        for k in 1..SPECTRUM_BINS {
            acc += 2.0 * power[k] * c[k];
        }
        *rv = acc / n;
    }
    r
}

/// Predictor for the spectral envelope described by a cepstrum.
pub fn cepstrum_to_lpc(c: &Cepstrum) -> LpcFilter {
    let bands = cepstrum_to_band_powers(c);
    let mut log_bands = [0.0; NB_BANDS];
    for (l, p) in log_bands.iter_mut().zip(bands.powers.iter()) {
        *l = p.log10();
    }
    let log_spec = interpolate_log_spectrum(&log_bands);
    let power = log_spec.map(|l| 10f64.powf(l));
    let mut r = autocorrelation_from_power(&power);
    r[0] *= NOISE_FLOOR;
    levinson_durbin(&r).expect("positive spectrum gives positive r[0]")
}
