//! Acoustic feature analysis: cepstra, pitch and closed-loop excitation codes.

use rayon::prelude::*;

use crate::dsp::{
    band_analyze, mulaw_decode, mulaw_encode, preemphasis_in_place, AudioBuffer, Cepstrum,
    FRAME_SIZE, NB_BANDS, PREEMPHASIS, WINDOW_SIZE,
};
use crate::error::{Error, Result};
use crate::mlpg::STATIC_DIMS;
use crate::prosody::normalize_log_pitch;
use crate::vocoder::{LpcFilter, LpcHistory};

/// Shortest pitch lag searched (400 Hz at 16 kHz).
pub const MIN_PITCH_LAG: usize = 40;
/// Longest pitch lag searched (50 Hz at 16 kHz).
pub const MAX_PITCH_LAG: usize = 320;
/// Samples of context handed to the pitch detector per frame.
pub const PITCH_CONTEXT: usize = 2 * MAX_PITCH_LAG;
/// Correlation below which a frame is unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.3;

/// A lag counts as the period if it reaches this fraction of the best
/// correlation; the shortest such local peak wins so that period multiples
/// are not chosen over the fundamental.
const OCTAVE_TOLERANCE: f64 = 0.95;

/// The 20 statics of one 10 ms frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticFrame {
    pub cepstrum: Cepstrum,
    /// Normalized log pitch, 0 when unvoiced.
    pub pitch: f64,
    pub pitch_corr: f64,
}

impl AcousticFrame {
    pub fn to_array(&self) -> [f64; STATIC_DIMS] {
        let mut out = [0.0; STATIC_DIMS];
        out[..NB_BANDS].copy_from_slice(self.cepstrum.coeffs());
        out[NB_BANDS] = self.pitch;
        out[NB_BANDS + 1] = self.pitch_corr;
        out
    }

    /// Builds a frame from 20 statics, clamping pitch and correlation into `[0, 1]`.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != STATIC_DIMS {
            return Err(Error::invalid(format!(
                "acoustic frame needs {STATIC_DIMS} values, got {}",
                v.len()
            )));
        }
        if v[NB_BANDS..].iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("pitch features are not finite"));
        }
        Ok(AcousticFrame {
            cepstrum: Cepstrum::from_slice(&v[..NB_BANDS])?,
            pitch: v[NB_BANDS].clamp(0.0, 1.0),
            pitch_corr: v[NB_BANDS + 1].clamp(0.0, 1.0),
        })
    }
}

/// Non-empty sequence of frames at a 10 ms hop.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    frames: Vec<AcousticFrame>,
}

impl FeatureTrack {
    pub fn new(frames: Vec<AcousticFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("feature track has no frames"));
        }
        Ok(FeatureTrack { frames })
    }

    pub fn frames(&self) -> &[AcousticFrame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [AcousticFrame] {
        &mut self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn statics(&self) -> Vec<[f64; STATIC_DIMS]> {
        self.frames.iter().map(AcousticFrame::to_array).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    /// Period in samples; 0 when unvoiced.
    pub period: usize,
    /// Normalized autocorrelation at the chosen lag, in `[0, 1]`.
    pub corr: f64,
}

impl PitchEstimate {
    /// Normalized log-pitch feature for this estimate.
    pub fn feature(&self, fs: f64) -> f64 {
        if self.period == 0 {
            0.0
        } else {
            normalize_log_pitch((fs / self.period as f64).log2())
        }
    }
}

/// Normalized-autocorrelation pitch search over lags 40..=320.
///
/// The first `len - 320` samples are correlated against the same-length
/// segment starting `lag` samples later, so every lag uses the same number
/// of terms.
pub fn detect_pitch(context: &[f64], fs: f64) -> Result<PitchEstimate> {
    let scale = fs / 16_000.0;
    let min_lag = (MIN_PITCH_LAG as f64 * scale).round() as usize;
    let max_lag = (MAX_PITCH_LAG as f64 * scale).round() as usize;
    if context.len() < 2 * max_lag || min_lag == 0 {
        return Err(Error::invalid(format!(
            "pitch context of {} samples is shorter than {}",
            context.len(),
            2 * max_lag
        )));
    }
    let w = context.len() - max_lag;
    let head = &context[..w];
    let head_energy: f64 = head.iter().map(|x| x * x).sum();

    let mut prefix = vec![0.0; context.len() + 1];
    for (i, x) in context.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x * x;
    }

    let corr: Vec<f64> = (min_lag..=max_lag)
        .map(|lag| {
            let tail_energy = prefix[lag + w] - prefix[lag];
            let denom = (head_energy * tail_energy).sqrt();
            if denom <= 0.0 {
                return 0.0;
            }
            let xy: f64 = head
                .iter()
                .zip(&context[lag..lag + w])
                .map(|(a, b)| a * b)
                .sum();
            xy / denom
        })
        .collect();

    let best = corr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return Ok(PitchEstimate {
            period: 0,
            corr: 0.0,
        });
    }
    let n = corr.len();
    let pick = (0..n)
        .find(|&i| {
            let peak = (i == 0 || corr[i] >= corr[i - 1]) && (i + 1 == n || corr[i] >= corr[i + 1]);
            peak && corr[i] >= OCTAVE_TOLERANCE * best
        })
        .unwrap_or(0);
    let c = corr[pick].clamp(0.0, 1.0);
    let period = if c < VOICING_THRESHOLD {
        0
    } else {
        pick + min_lag
    };
    Ok(PitchEstimate { period, corr: c })
}

/// Number of 10 ms frames for `len` samples.
pub fn frame_count(len: usize) -> usize {
    len.div_ceil(FRAME_SIZE)
}

/// Copies `out.len()` samples starting at `start` (may be negative), zero outside.
fn padded_slice(x: &[f64], start: isize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let idx = start + i as isize;
        *o = if idx >= 0 && (idx as usize) < x.len() {
            x[idx as usize]
        } else {
            0.0
        };
    }
}

/// One frame of features per 10 ms hop.
///
/// Frame `i` covers samples `160 i .. 160 (i + 1)`; its 20 ms analysis
/// window and 40 ms pitch context are centered on that span and zero padded
/// at the edges. Cepstra come from the pre-emphasized signal.
pub fn extract_features(a: &AudioBuffer) -> Result<FeatureTrack> {
    if a.len() < FRAME_SIZE {
        return Err(Error::invalid(format!(
            "audio of {} samples is shorter than one {FRAME_SIZE}-sample frame",
            a.len()
        )));
    }
    let raw = a.samples();
    let mut emph = raw.to_vec();
    preemphasis_in_place(&mut emph, PREEMPHASIS);
    let fs = a.sample_rate() as f64;
    let frames = (0..frame_count(raw.len()))
        .into_par_iter()
        .map(|i| {
            let center = (i * FRAME_SIZE + FRAME_SIZE / 2) as isize;
            let mut win = [0.0; WINDOW_SIZE];
            padded_slice(&emph, center - (WINDOW_SIZE / 2) as isize, &mut win);
            let cepstrum = Cepstrum::from_band_powers(&band_analyze(&win)?);
            let mut ctx = [0.0; PITCH_CONTEXT];
            padded_slice(raw, center - (PITCH_CONTEXT / 2) as isize, &mut ctx);
            let p = detect_pitch(&ctx, fs)?;
            Ok(AcousticFrame {
                cepstrum,
                pitch: p.feature(fs),
                pitch_corr: p.corr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureTrack::new(frames)
}

/// Codes and reconstruction from the closed-loop quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationAnalysis {
    pub codes: Vec<u8>,
    /// The quantized reconstruction `ŝ` in the pre-emphasized domain.
    pub reconstruction: Vec<f64>,
}

/// Closed-loop μ-law quantization of the LPC residual.
///
/// For each sample `pred = Σ a_k ŝ[n-k]`, `code = μ(s[n] - pred)` and
/// `ŝ[n] = pred + μ⁻¹(code)`. The input is zero padded to a whole number of
/// frames, so the output holds `160 * lpc.len()` codes.
pub fn closed_loop_excitation(
    preemphasized: &AudioBuffer,
    lpc: &[LpcFilter],
) -> Result<ExcitationAnalysis> {
    let s = preemphasized.samples();
    let frames = frame_count(s.len());
    if lpc.len() != frames || frames == 0 {
        return Err(Error::invalid(format!(
            "{} samples need {frames} LPC frames, got {}",
            s.len(),
            lpc.len()
        )));
    }
    let n = frames * FRAME_SIZE;
    let mut codes = Vec::with_capacity(n);
    let mut recon = Vec::with_capacity(n);
    let mut hist = LpcHistory::new();
    for i in 0..n {
        let filt = &lpc[i / FRAME_SIZE];
        let x = s.get(i).copied().unwrap_or(0.0);
        let pred = filt.predict(hist.samples());
        let code = mulaw_encode(x - pred);
        let shat = pred + mulaw_decode(code);
        codes.push(code);
        recon.push(shat);
        hist.push(shat);
    }
    Ok(ExcitationAnalysis {
        codes,
        reconstruction: recon,
    })
}

/// Excitation codes for pre-emphasized audio; see [`closed_loop_excitation`].
pub fn extract_excitation(preemphasized: &AudioBuffer, lpc: &[LpcFilter]) -> Result<Vec<u8>> {
    closed_loop_excitation(preemphasized, lpc).map(|e| e.codes)
}
