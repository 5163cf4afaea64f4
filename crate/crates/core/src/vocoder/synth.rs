use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fastmath as fm;
use super::lpc::{cepstrum_to_lpc, LpcFilter, LpcHistory};
use super::net::{
    frame_condition, VocoderWeights, BLOCK, CLASSES, COND_DIM, EMBED_DIM, GRU_A, GRU_B,
};
use crate::dsp::{
    deemphasis_in_place, mulaw_decode, mulaw_encode, AudioBuffer, FRAME_SIZE, PREEMPHASIS,
};
use crate::error::{Error, Result};
use crate::features::{AcousticFrame, FeatureTrack};

/// How sampling temperature is chosen per frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemperaturePolicy {
    /// `T = clamp(1 - 0.5 * pitch_corr, 0.5, 1)`: sharper when voiced.
    #[default]
    PitchCorrelation,
    Fixed {
        temperature: f64,
    },
}

impl TemperaturePolicy {
    pub fn temperature(&self, frame: &AcousticFrame) -> f64 {
        match *self {
            TemperaturePolicy::PitchCorrelation => (1.0 - 0.5 * frame.pitch_corr).clamp(0.5, 1.0),
            TemperaturePolicy::Fixed { temperature } => temperature,
        }
    }
}

/// Block-sparse matrix of 16x1 column blocks, stored block-row by block-row.
#[derive(Debug, Clone)]
struct BlockSparse {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<[f32; BLOCK]>,
}

impl BlockSparse {
    /// Blocks whose mask is zero are dropped; without a mask every block is kept.
    fn from_masked(w: &Array2<f64>, mask: Option<&Array2<f64>>) -> Self {
        let (rows, cols) = w.dim();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for br in 0..rows / BLOCK {
            for c in 0..cols {
                let r0 = br * BLOCK;
                let keep = mask.is_none_or(|m| (r0..r0 + BLOCK).any(|r| m[[r, c]] != 0.0));
                if !keep {
                    continue;
                }
                let mut block = [0f32; BLOCK];
                for (k, b) in block.iter_mut().enumerate() {
                    let m = mask.map_or(1.0, |m| m[[r0 + k, c]]);
                    *b = (w[[r0 + k, c]] * m) as f32;
                }
                col_idx.push(c as u32);
                vals.push(block);
            }
            row_ptr.push(col_idx.len());
        }
        BlockSparse {
            row_ptr,
            cols: col_idx,
            vals,
        }
    }

    #[inline]
    fn matvec(&self, x: &[f32], out: &mut [f32]) {
        for (br, chunk) in out.chunks_exact_mut(BLOCK).enumerate() {
            let mut acc = [0f32; BLOCK];
            for i in self.row_ptr[br]..self.row_ptr[br + 1] {
                let xv = x[self.cols[i] as usize];
                let v = &self.vals[i];
                for k in 0..BLOCK {
                    acc[k] += v[k] * xv;
                }
            }
            chunk.copy_from_slice(&acc);
        }
    }

    fn nnz_blocks(&self) -> usize {
        self.vals.len()
    }
}

/// Row-major dense f32 matrix.
#[derive(Debug, Clone)]
struct Dense {
    cols: usize,
    data: Vec<f32>,
}

impl Dense {
    fn from_view(w: ndarray::ArrayView2<f64>) -> Self {
        Dense {
            cols: w.ncols(),
            data: w.iter().map(|&v| v as f32).collect(),
        }
    }

    #[inline]
    fn matvec_add(&self, x: &[f32], out: &mut [f32]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += fm::dot(row, x);
        }
    }
}

fn to_f32(v: impl IntoIterator<Item = f64>) -> Vec<f32> {
    v.into_iter().map(|x| x as f32).collect()
}

/// Inference form of the sample-rate network: embeddings are folded into
/// the GRU-A input weights and the recurrent matrix is block sparse.
#[derive(Debug, Clone)]
pub struct SampleNet {
    /// `[code][3 * GRU_A]` contributions of each embedding table.
    sig_table: Vec<f32>,
    pred_table: Vec<f32>,
    exc_table: Vec<f32>,
    gru_a_hh: BlockSparse,
    gru_a_b_hh: Vec<f32>,
    gru_b_ih_h: Dense,
    gru_b_hh: Dense,
    gru_b_b_hh: Vec<f32>,
    fc_w1: Dense,
    fc_w2: Dense,
    fc_b1: Vec<f32>,
    fc_b2: Vec<f32>,
    fc_f1: Vec<f32>,
    fc_f2: Vec<f32>,
    weights: VocoderWeights,
}

fn fold_embedding(embed: &Array2<f64>, w_part: ndarray::ArrayView2<f64>) -> Vec<f32> {
    to_f32(embed.dot(&w_part.t()))
}

impl SampleNet {
    pub fn new(w: &VocoderWeights) -> Result<Self> {
        w.validate()?;
        let w_ih = &w.gru_a_w_ih;
        Ok(SampleNet {
            sig_table: fold_embedding(&w.embed_sig, w_ih.slice(s![.., 0..EMBED_DIM])),
            pred_table: fold_embedding(&w.embed_pred, w_ih.slice(s![.., EMBED_DIM..2 * EMBED_DIM])),
            exc_table: fold_embedding(
                &w.embed_exc,
                w_ih.slice(s![.., 2 * EMBED_DIM..3 * EMBED_DIM]),
            ),
            gru_a_hh: BlockSparse::from_masked(&w.gru_a_w_hh, w.gru_a_mask.as_ref()),
            gru_a_b_hh: to_f32(w.gru_a_b_hh.iter().copied()),
            gru_b_ih_h: Dense::from_view(w.gru_b_w_ih.slice(s![.., ..GRU_A])),
            gru_b_hh: Dense::from_view(w.gru_b_w_hh.view()),
            gru_b_b_hh: to_f32(w.gru_b_b_hh.iter().copied()),
            fc_w1: Dense::from_view(w.fc_w1.view()),
            fc_w2: Dense::from_view(w.fc_w2.view()),
            fc_b1: to_f32(w.fc_b1.iter().copied()),
            fc_b2: to_f32(w.fc_b2.iter().copied()),
            fc_f1: to_f32(w.fc_f1.iter().copied()),
            fc_f2: to_f32(w.fc_f2.iter().copied()),
            weights: w.clone(),
        })
    }

    /// Fraction of recurrent GRU-A blocks actually evaluated.
    pub fn density(&self) -> f64 {
        self.gru_a_hh.nnz_blocks() as f64 / (3 * GRU_A / BLOCK * GRU_A) as f64
    }

    /// Per-frame GRU input terms from the conditioning vectors.
    fn frame_inputs(&self, cond: &Array2<f64>) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
        let w = &self.weights;
        let a = cond.dot(&w.gru_a_w_ih.slice(s![.., 3 * EMBED_DIM..]).t()) + &w.gru_a_b_ih;
        let b = cond.dot(&w.gru_b_w_ih.slice(s![.., GRU_A..]).t()) + &w.gru_b_b_ih;
        debug_assert_eq!(cond.ncols(), COND_DIM);
        let rows = |m: Array2<f64>| {
            m.rows()
                .into_iter()
                .map(|r| to_f32(r.iter().copied()))
                .collect()
        };
        (rows(a), rows(b))
    }
}

/// Reset-after GRU update from precomputed input and recurrent terms.
#[inline]
fn gru_update(h: &mut [f32], gi: &[f32], gh: &[f32]) {
    let n = h.len();
    for j in 0..n {
        let z = fm::sigmoid(gi[j] + gh[j]);
        let r = fm::sigmoid(gi[n + j] + gh[n + j]);
        let c = fm::tanh(gi[2 * n + j] + r * gh[2 * n + j]);
        h[j] = z * h[j] + (1.0 - z) * c;
    }
}

/// Mutable state of one synthesis run.
struct Loop {
    hist: LpcHistory,
    prev_sample: f64,
    prev_exc: f64,
    out: Vec<f64>,
}

impl Loop {
    fn new(n: usize) -> Self {
        Loop {
            hist: LpcHistory::new(),
            prev_sample: 0.0,
            prev_exc: 0.0,
            out: Vec::with_capacity(n),
        }
    }

    #[inline]
    fn emit(&mut self, pred: f64, exc: f64) {
        let s = pred + exc;
        self.out.push(s);
        self.hist.push(s);
        self.prev_sample = s;
        self.prev_exc = exc;
    }
}

fn lpc_per_frame(frames: &[AcousticFrame]) -> Vec<LpcFilter> {
    frames
        .iter()
        .map(|f| cepstrum_to_lpc(&f.cepstrum))
        .collect()
}

/// Pre-emphasized output of the sample loop driven by the network.
pub fn synthesize_preemphasized(
    track: &FeatureTrack,
    net: &SampleNet,
    seed: u64,
    policy: TemperaturePolicy,
) -> Result<Vec<f64>> {
    let frames = track.frames();
    let cond = frame_condition(frames, &net.weights)?;
    let (cond_a, cond_b) = net.frame_inputs(&cond);
    let lpc = lpc_per_frame(frames);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = Loop::new(frames.len() * FRAME_SIZE);

    let mut h_a = vec![0f32; GRU_A];
    let mut h_b = vec![0f32; GRU_B];
    let mut gi_a = vec![0f32; 3 * GRU_A];
    let mut gh_a = vec![0f32; 3 * GRU_A];
    let mut gi_b = vec![0f32; 3 * GRU_B];
    let mut gh_b = vec![0f32; 3 * GRU_B];
    let mut o1 = vec![0f32; CLASSES];
    let mut o2 = vec![0f32; CLASSES];
    let mut probs = vec![0f32; CLASSES];
    let row = 3 * GRU_A;

    for (fi, frame) in frames.iter().enumerate() {
        let inv_t = (1.0 / policy.temperature(frame)) as f32;
        if !inv_t.is_finite() || inv_t <= 0.0 {
            return Err(Error::invalid("temperature must be positive"));
        }
        let filt = &lpc[fi];
        for _ in 0..FRAME_SIZE {
            let pred = filt.predict(st.hist.samples());
            let (cs, cp, ce) = (
                mulaw_encode(st.prev_sample) as usize,
                mulaw_encode(pred) as usize,
                mulaw_encode(st.prev_exc) as usize,
            );
            let (ts, tp, te) = (
                &net.sig_table[cs * row..(cs + 1) * row],
                &net.pred_table[cp * row..(cp + 1) * row],
                &net.exc_table[ce * row..(ce + 1) * row],
            );
            for j in 0..row {
                gi_a[j] = ts[j] + tp[j] + te[j] + cond_a[fi][j];
            }
            net.gru_a_hh.matvec(&h_a, &mut gh_a);
            for (g, b) in gh_a.iter_mut().zip(&net.gru_a_b_hh) {
                *g += b;
            }
            gru_update(&mut h_a, &gi_a, &gh_a);

            gi_b.copy_from_slice(&cond_b[fi]);
            net.gru_b_ih_h.matvec_add(&h_a, &mut gi_b);
            gh_b.copy_from_slice(&net.gru_b_b_hh);
            net.gru_b_hh.matvec_add(&h_b, &mut gh_b);
            gru_update(&mut h_b, &gi_b, &gh_b);

            o1.copy_from_slice(&net.fc_b1);
            net.fc_w1.matvec_add(&h_b, &mut o1);
            o2.copy_from_slice(&net.fc_b2);
            net.fc_w2.matvec_add(&h_b, &mut o2);
            let mut max = f32::NEG_INFINITY;
            for k in 0..CLASSES {
                let logit =
                    (net.fc_f1[k] * fm::tanh(o1[k]) + net.fc_f2[k] * fm::tanh(o2[k])) * inv_t;
                probs[k] = logit;
                max = max.max(logit);
            }
            if !max.is_finite() {
                return Err(Error::SynthesisFailed { frame: fi });
            }
            let mut total = 0f32;
            for p in probs.iter_mut() {
                *p = fm::exp(*p - max);
                total += *p;
            }
            let u = rng.gen::<f32>() * total;
            let mut acc = 0f32;
            let mut code = CLASSES - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    code = k;
                    break;
                }
            }
            st.emit(pred, mulaw_decode(code as u8));
        }
        if h_a.iter().any(|v| !v.is_finite()) || !st.prev_sample.is_finite() {
            return Err(Error::SynthesisFailed { frame: fi });
        }
    }
    Ok(st.out)
}

/// Full neural synthesis: `160 * frames` de-emphasized samples.
pub fn synthesize(
    track: &FeatureTrack,
    weights: &VocoderWeights,
    seed: u64,
    policy: TemperaturePolicy,
) -> Result<AudioBuffer> {
    let net = SampleNet::new(weights)?;
    synthesize_with(track, &net, seed, policy)
}

/// [`synthesize`] with an already prepared network.
pub fn synthesize_with(
    track: &FeatureTrack,
    net: &SampleNet,
    seed: u64,
    policy: TemperaturePolicy,
) -> Result<AudioBuffer> {
    let mut out = synthesize_preemphasized(track, net, seed, policy)?;
    deemphasis_in_place(&mut out, PREEMPHASIS);
    AudioBuffer::new(out)
}

/// Sample loop with the excitation taken from `codes`; pre-emphasized output.
pub fn bypass_reconstruction(codes: &[u8], track: &FeatureTrack) -> Result<Vec<f64>> {
    let frames = track.frames();
    if codes.len() != frames.len() * FRAME_SIZE {
        return Err(Error::invalid(format!(
            "{} frames need {} excitation codes, got {}",
            frames.len(),
            frames.len() * FRAME_SIZE,
            codes.len()
        )));
    }
    let lpc = lpc_per_frame(frames);
    let mut st = Loop::new(codes.len());
    for (i, &code) in codes.iter().enumerate() {
        let pred = lpc[i / FRAME_SIZE].predict(st.hist.samples());
        st.emit(pred, mulaw_decode(code));
    }
    Ok(st.out)
}

/// Copy synthesis from known excitation codes, de-emphasized.
pub fn bypass_synthesize(codes: &[u8], track: &FeatureTrack) -> Result<AudioBuffer> {
    let mut out = bypass_reconstruction(codes, track)?;
    deemphasis_in_place(&mut out, PREEMPHASIS);
    AudioBuffer::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{mulaw_max_step, preemphasis, MULAW_ZERO};
    use crate::features::{closed_loop_excitation, extract_features};
    use rand::Rng;
    use std::f64::consts::PI;

    fn frame(c: [f64; 18], corr: f64) -> AcousticFrame {
        let mut v = c.to_vec();
        v.push(0.4);
        v.push(corr);
        AcousticFrame::from_slice(&v).unwrap()
    }

    fn random_track(n: usize, seed: u64, spread: f64) -> FeatureTrack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n)
            .map(|_| {
                let mut c = [0.0; 18];
                c.iter_mut()
                    .for_each(|x| *x = rng.gen_range(-spread..spread));
                frame(c, rng.gen_range(0.0..1.0))
            })
            .collect();
        FeatureTrack::new(frames).unwrap()
    }

    fn silence_weights() -> VocoderWeights {
        let mut w = VocoderWeights::random(1);
        w.fc_f1.fill(0.0);
        w.fc_f2.fill(0.0);
        w.fc_b1[MULAW_ZERO as usize] = 10.0;
        w.fc_f1[MULAW_ZERO as usize] = 1000.0;
        w
    }

    #[test]
    fn temperature_policy() {
        let p = TemperaturePolicy::PitchCorrelation;
        assert_eq!(p.temperature(&frame([0.0; 18], 0.0)), 1.0);
        assert_eq!(p.temperature(&frame([0.0; 18], 1.0)), 0.5);
        assert_eq!(p.temperature(&frame([0.0; 18], 0.5)), 0.75);
    }

    #[test]
    fn forced_zero_excitation_is_silent() {
        let track = random_track(5, 2, 1.0);
        let audio =
            synthesize(&track, &silence_weights(), 7, TemperaturePolicy::default()).unwrap();
        assert_eq!(audio.len(), 5 * FRAME_SIZE);
        assert!(audio.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let track = random_track(4, 3, 1.0);
        let w = VocoderWeights::random(2);
        let a = synthesize(&track, &w, 11, TemperaturePolicy::default()).unwrap();
        let b = synthesize(&track, &w, 11, TemperaturePolicy::default()).unwrap();
        let c = synthesize(&track, &w, 12, TemperaturePolicy::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 640);
    }

    #[test]
    fn all_ones_mask_changes_nothing() {
        let track = random_track(3, 4, 1.0);
        let w = VocoderWeights::random(3);
        let mut masked = w.clone();
        masked.gru_a_mask = Some(Array2::ones(w.gru_a_w_hh.dim()));
        let a = synthesize(&track, &w, 5, TemperaturePolicy::default()).unwrap();
        let b = synthesize(&track, &masked, 5, TemperaturePolicy::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(SampleNet::new(&masked).unwrap().density(), 1.0);
    }

    #[test]
    fn sparse_network_runs() {
        let track = random_track(3, 5, 1.0);
        let mut w = VocoderWeights::random(4);
        w.apply_block_sparsity(0.9).unwrap();
        let net = SampleNet::new(&w).unwrap();
        assert!((net.density() - 0.1).abs() < 1e-3);
        let a = synthesize_with(
            &track,
            &net,
            1,
            TemperaturePolicy::Fixed { temperature: 1.0 },
        )
        .unwrap();
        assert!(a.samples().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn non_finite_weights_rejected() {
        let mut w = VocoderWeights::random(1);
        w.fc_b1[3] = f64::NAN;
        assert!(SampleNet::new(&w).is_err());
    }

    #[test]
    fn bypass_silence_and_length_check() {
        let track = random_track(2, 6, 1.0);
        let out = bypass_synthesize(&vec![MULAW_ZERO; 320], &track).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
        assert!(bypass_synthesize(&vec![MULAW_ZERO; 319], &track).is_err());
    }

    #[test]
    fn bypass_impulse_matches_direct_filter() {
        let track = random_track(3, 7, 0.8);
        let mut codes = vec![MULAW_ZERO; 480];
        codes[10] = 255;
        let got = bypass_synthesize(&codes, &track).unwrap();
        let lpc: Vec<_> = track
            .frames()
            .iter()
            .map(|f| cepstrum_to_lpc(&f.cepstrum))
            .collect();
        let mut s = vec![0.0f64; 480];
        for n in 0..480 {
            let a = &lpc[n / 160].a;
            let mut v = if n == 10 { mulaw_decode(255) } else { 0.0 };
            for k in 1..=16 {
                if n >= k {
                    v += a[k - 1] * s[n - k];
                }
            }
            s[n] = v;
        }
        let mut y = vec![0.0; 480];
        for n in 0..480 {
            y[n] = s[n] + if n > 0 { 0.85 * y[n - 1] } else { 0.0 };
        }
        for n in 0..480 {
            assert!((got.samples()[n] - y[n]).abs() < 1e-9, "sample {n}");
        }
        assert!(got.samples()[..10].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ten_second_fuzz_stays_bounded() {
        let track = random_track(1000, 8, 1.5);
        let mut w = VocoderWeights::random(9);
        w.apply_block_sparsity(0.9).unwrap();
        let net = SampleNet::new(&w).unwrap();
        let pre = synthesize_preemphasized(&track, &net, 3, TemperaturePolicy::default()).unwrap();
        assert_eq!(pre.len(), 160_000);
        let peak = pre.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(pre.iter().all(|v| v.is_finite()));
        assert!(peak < 32.0, "peak {peak}");
    }

    #[test]
    fn copy_synthesis_round_trip() {
        let n = 16000;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 16000.0;
                (1..=6)
                    .map(|h| 0.25 / h as f64 * (2.0 * PI * 140.0 * h as f64 * t).sin())
                    .sum::<f64>()
                    + rng.gen_range(-0.01..0.01)
            })
            .collect();
        let audio = AudioBuffer::new(x.clone()).unwrap();
        let track = extract_features(&audio).unwrap();
        let lpc: Vec<_> = track
            .frames()
            .iter()
            .map(|f| cepstrum_to_lpc(&f.cepstrum))
            .collect();
        let pre = preemphasis(&audio, PREEMPHASIS).unwrap();
        let analysis = closed_loop_excitation(&pre, &lpc).unwrap();
        let recon = bypass_reconstruction(&analysis.codes, &track).unwrap();
        assert_eq!(recon, analysis.reconstruction);
        let step = mulaw_max_step();
        for (r, s) in recon.iter().zip(pre.samples()) {
            assert!((r - s).abs() <= step);
        }
        let out = bypass_synthesize(&analysis.codes, &track).unwrap();
        let (mut sig, mut err) = (0.0, 0.0);
        for (o, s) in out.samples().iter().zip(&x) {
            sig += s * s;
            err += (o - s) * (o - s);
        }
        assert!(10.0 * (sig / err).log10() >= 25.0);
    }
}
