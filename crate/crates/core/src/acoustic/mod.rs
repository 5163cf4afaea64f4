//! Synthesizer network: frame inputs to 60 acoustic-parameter means per frame.
//!
//! Layer stack: label embedding, a phonetic convolution and a pitch
//! convolution over time (tanh, zero padded), one LSTM over their
//! concatenation, three rectified fully connected layers, and a linear head.

mod weights;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

pub use weights::{SynthesizerConfig, SynthesizerWeights};

use crate::error::{Error, Result};
use crate::mlpg::FULL_DIMS;
use crate::prosody::FrameInput;

/// `T x 60` predicted means in `[statics | deltas | accels]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticTrack {
    pub means: Array2<f64>,
}

impl AcousticTrack {
    pub fn frames(&self) -> usize {
        self.means.nrows()
    }

    pub fn rows(&self) -> Vec<[f64; FULL_DIMS]> {
        self.means
            .rows()
            .into_iter()
            .map(|r| {
                let mut out = [0.0; FULL_DIMS];
                out.iter_mut().zip(r.iter()).for_each(|(o, v)| *o = *v);
                out
            })
            .collect()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn embed_labels(frames: &[FrameInput], table: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((frames.len(), table.ncols()));
    for (t, f) in frames.iter().enumerate() {
        let id = f.label_id as usize;
        if id >= table.nrows() {
            return Err(Error::invalid(format!(
                "label id {id} at frame {t} outside vocabulary of {}",
                table.nrows()
            )));
        }
        out.row_mut(t).assign(&table.row(id));
    }
    Ok(out)
}

/// Valid output range and input offset for one kernel tap.
#[inline]
pub(crate) fn tap_range(t_len: usize, k: usize, half: usize) -> Option<(usize, usize, isize)> {
    let off = k as isize - half as isize;
    let t0 = (-off).max(0) as usize;
    let t1 = (t_len as isize - off).min(t_len as isize);
    if t1 as usize <= t0 || t1 <= 0 {
        None
    } else {
        Some((t0, t1 as usize, off))
    }
}

/// Zero-padded 1-D cross-correlation over time plus bias, before the nonlinearity.
pub(crate) fn conv_linear(
    x: ArrayView2<f64>,
    w: &Array3<f64>,
    b: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (c_out, c_in, kernel) = w.dim();
    if x.ncols() != c_in || b.len() != c_out {
        return Err(Error::invalid(format!(
            "convolution expects {c_in} input channels, got {}",
            x.ncols()
        )));
    }
    if kernel % 2 == 0 {
        return Err(Error::invalid(format!(
            "convolution kernel {kernel} must be odd"
        )));
    }
    let t_len = x.nrows();
    let half = kernel / 2;
    let mut out = Array2::zeros((t_len, c_out));
    out += b;
    for k in 0..kernel {
        if let Some((t0, t1, off)) = tap_range(t_len, k, half) {
            let wk = w.slice(s![.., .., k]);
            let src = x.slice(s![
                (t0 as isize + off) as usize..(t1 as isize + off) as usize,
                ..
            ]);
            let mut dst = out.slice_mut(s![t0..t1, ..]);
            dst += &src.dot(&wk.t());
        }
    }
    Ok(out)
}

/// Convolution over time followed by tanh.
pub fn conv_context(x: ArrayView2<f64>, w: &Array3<f64>, b: &Array1<f64>) -> Result<Array2<f64>> {
    Ok(conv_linear(x, w, b)?.mapv(f64::tanh))
}

/// Per-step LSTM state kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    /// Activated gates per step, `[input | forget | cell | output]`.
    pub gates: Array2<f64>,
    pub cells: Array2<f64>,
    pub hidden: Array2<f64>,
}

pub(crate) fn lstm_trace(
    x: ArrayView2<f64>,
    w_ih: &Array2<f64>,
    w_hh: &Array2<f64>,
    bias: &Array1<f64>,
) -> Result<LstmTrace> {
    let hsize = w_hh.ncols();
    if w_ih.nrows() != 4 * hsize || w_hh.nrows() != 4 * hsize || bias.len() != 4 * hsize {
        return Err(Error::invalid("lstm weight shapes are inconsistent"));
    }
    if x.ncols() != w_ih.ncols() {
        return Err(Error::invalid(format!(
            "lstm expects {} inputs, got {}",
            w_ih.ncols(),
            x.ncols()
        )));
    }
    let t_len = x.nrows();
    let mut pre_all = x.dot(&w_ih.t());
    pre_all += bias;
    let mut gates = Array2::zeros((t_len, 4 * hsize));
    let mut cells = Array2::zeros((t_len, hsize));
    let mut hidden = Array2::zeros((t_len, hsize));
    let mut h = Array1::<f64>::zeros(hsize);
    let mut c = Array1::<f64>::zeros(hsize);
    for t in 0..t_len {
        let pre = &pre_all.row(t) + &w_hh.dot(&h);
        let mut g = gates.row_mut(t);
        for j in 0..hsize {
            let i_g = sigmoid(pre[j]);
            let f_g = sigmoid(pre[hsize + j]);
            let c_g = pre[2 * hsize + j].tanh();
            let o_g = sigmoid(pre[3 * hsize + j]);
            g[j] = i_g;
            g[hsize + j] = f_g;
            g[2 * hsize + j] = c_g;
            g[3 * hsize + j] = o_g;
            c[j] = f_g * c[j] + i_g * c_g;
            h[j] = o_g * c[j].tanh();
        }
        cells.row_mut(t).assign(&c);
        hidden.row_mut(t).assign(&h);
    }
    Ok(LstmTrace {
        gates,
        cells,
        hidden,
    })
}

/// Unidirectional LSTM from zero state; gate order input, forget, cell, output.
pub fn lstm_forward(
    x: ArrayView2<f64>,
    w_ih: &Array2<f64>,
    w_hh: &Array2<f64>,
    bias: &Array1<f64>,
) -> Result<Array2<f64>> {
    Ok(lstm_trace(x, w_ih, w_hh, bias)?.hidden)
}

/// Every activation of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub labels: Vec<usize>,
    pub pitch: Array2<f64>,
    pub embedded: Array2<f64>,
    pub phonetic: Array2<f64>,
    pub pitch_ctx: Array2<f64>,
    pub lstm_in: Array2<f64>,
    pub lstm: LstmTrace,
    pub fc: [Array2<f64>; 3],
    pub output: Array2<f64>,
}

pub(crate) fn forward_trace(frames: &[FrameInput], w: &SynthesizerWeights) -> Result<ForwardTrace> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to predict"));
    }
    let embedded = embed_labels(frames, &w.embedding)?;
    let pitch = Array2::from_shape_fn((frames.len(), 1), |(t, _)| frames[t].pitch);
    let phonetic = conv_context(embedded.view(), &w.phonetic_conv_w, &w.phonetic_conv_b)?;
    let pitch_ctx = conv_context(pitch.view(), &w.pitch_conv_w, &w.pitch_conv_b)?;
    let lstm_in = ndarray::concatenate(Axis(1), &[phonetic.view(), pitch_ctx.view()])
        .expect("row counts match");
    let lstm = lstm_trace(lstm_in.view(), &w.lstm_w_ih, &w.lstm_w_hh, &w.lstm_b)?;
    let mut prev = lstm.hidden.clone();
    let mut fc: Vec<Array2<f64>> = Vec::with_capacity(3);
    for (wl, bl) in w.fc_w.iter().zip(w.fc_b.iter()) {
        let mut z = prev.dot(&wl.t());
        z += bl;
        z.mapv_inplace(|v| v.max(0.0));
        fc.push(z.clone());
        prev = z;
    }
    let mut output = prev.dot(&w.head_w.t());
    output += &w.head_b;
    let fc: [Array2<f64>; 3] = fc.try_into().expect("three layers");
    Ok(ForwardTrace {
        labels: frames.iter().map(|f| f.label_id as usize).collect(),
        pitch,
        embedded,
        phonetic,
        pitch_ctx,
        lstm_in,
        lstm,
        fc,
        output,
    })
}

/// Runs the full synthesizer network.
pub fn predict_acoustics(frames: &[FrameInput], w: &SynthesizerWeights) -> Result<AcousticTrack> {
    let trace = forward_trace(frames, w)?;
    if trace.output.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "acoustic prediction produced non-finite values",
        ));
    }
    Ok(AcousticTrack {
        means: trace.output,
    })
}
