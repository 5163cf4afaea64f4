//! Cepstral formant enhancement with energy renormalization.

use serde::{Deserialize, Serialize};

use crate::dsp::{energy_of_cepstrum, Cepstrum, NB_BANDS};
use crate::error::{Error, Result};

/// Scale factor and first scaled index of the formant enhancer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    pub alpha: f64,
    pub first_scaled: usize,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            alpha: 1.4,
            first_scaled: 2,
        }
    }
}

/// Multiplies coefficients `k >= first_scaled` by `alpha`.
pub fn formant_enhance(c: &Cepstrum, alpha: f64, first_scaled: usize) -> Result<Cepstrum> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!(
            "enhancement factor {alpha} must be positive"
        )));
    }
    if first_scaled > NB_BANDS {
        return Err(Error::invalid(format!(
            "first scaled index {first_scaled} exceeds {NB_BANDS}"
        )));
    }
    let mut out = *c.coeffs();
    for v in out.iter_mut().skip(first_scaled) {
        *v *= alpha;
    }
    Cepstrum::new(out)
}

/// Shifts `C_0` of `enhanced` so its energy matches that of `original`.
pub fn energy_normalize(original: &Cepstrum, enhanced: &Cepstrum) -> Cepstrum {
    let ratio = energy_of_cepstrum(original) / energy_of_cepstrum(enhanced);
    enhanced.with_c0_offset((NB_BANDS as f64).sqrt() * ratio.log10())
}

/// Formant enhancement followed by energy renormalization.
pub fn enhance_with(c: &Cepstrum, cfg: &EnhanceConfig) -> Result<Cepstrum> {
    let scaled = formant_enhance(c, cfg.alpha, cfg.first_scaled)?;
    Ok(energy_normalize(c, &scaled))
}

/// [`enhance_with`] at the default `alpha = 1.4`, `K = 2`.
pub fn enhance(c: &Cepstrum) -> Cepstrum {
    enhance_with(c, &EnhanceConfig::default()).expect("default configuration is valid")
}
