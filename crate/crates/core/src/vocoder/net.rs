use ndarray::{Array1, Array2, Array3, ArrayD, ArrayViewD, ArrayViewMutD, Ix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acoustic::conv_context;
use crate::error::{Error, Result};
use crate::features::AcousticFrame;
use crate::mlpg::STATIC_DIMS;

/// Width of the frame network and of every embedding.
pub const COND_DIM: usize = 128;
pub const EMBED_DIM: usize = 128;
pub const GRU_A: usize = 384;
pub const GRU_B: usize = 16;
pub const CLASSES: usize = 256;
/// Rows per block of the sparse recurrent matrix.
pub const BLOCK: usize = 16;
const FRAME_KERNEL: usize = 3;
/// GRU-A input: sample, prediction and excitation embeddings plus conditioning.
pub const GRU_A_INPUT: usize = 3 * EMBED_DIM + COND_DIM;
pub const GRU_B_INPUT: usize = GRU_A + COND_DIM;

/// Frame-rate and sample-rate network parameters.
///
/// GRU matrices stack the gates as `[update | reset | candidate]`; the
/// candidate uses reset-after gating, `n = tanh(Wx + b + r * (Uh + c))`.
/// The GRU-A input is `[sample | prediction | excitation | condition]`, the
/// GRU-B input is `[h_a | condition]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VocoderWeights {
    pub conv1_w: Array3<f64>,
    pub conv1_b: Array1<f64>,
    pub conv2_w: Array3<f64>,
    pub conv2_b: Array1<f64>,
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array2<f64>,
    pub fc2_b: Array1<f64>,
    pub embed_sig: Array2<f64>,
    pub embed_pred: Array2<f64>,
    pub embed_exc: Array2<f64>,
    pub gru_a_w_ih: Array2<f64>,
    pub gru_a_w_hh: Array2<f64>,
    pub gru_a_b_ih: Array1<f64>,
    pub gru_a_b_hh: Array1<f64>,
    pub gru_b_w_ih: Array2<f64>,
    pub gru_b_w_hh: Array2<f64>,
    pub gru_b_b_ih: Array1<f64>,
    pub gru_b_b_hh: Array1<f64>,
    pub fc_w1: Array2<f64>,
    pub fc_w2: Array2<f64>,
    pub fc_b1: Array1<f64>,
    pub fc_b2: Array1<f64>,
    pub fc_f1: Array1<f64>,
    pub fc_f2: Array1<f64>,
    /// Binary mask over `gru_a_w_hh`, if the recurrent matrix is sparse.
    pub gru_a_mask: Option<Array2<f64>>,
}

const NAMES: [&str; 25] = [
    "vocoder.frame.conv1.weight",
    "vocoder.frame.conv1.bias",
    "vocoder.frame.conv2.weight",
    "vocoder.frame.conv2.bias",
    "vocoder.frame.fc1.weight",
    "vocoder.frame.fc1.bias",
    "vocoder.frame.fc2.weight",
    "vocoder.frame.fc2.bias",
    "vocoder.embed_sig",
    "vocoder.embed_pred",
    "vocoder.embed_exc",
    "vocoder.gru_a.weight_ih",
    "vocoder.gru_a.weight_hh",
    "vocoder.gru_a.bias_ih",
    "vocoder.gru_a.bias_hh",
    "vocoder.gru_b.weight_ih",
    "vocoder.gru_b.weight_hh",
    "vocoder.gru_b.bias_ih",
    "vocoder.gru_b.bias_hh",
    "vocoder.dual_fc.weight1",
    "vocoder.dual_fc.weight2",
    "vocoder.dual_fc.bias1",
    "vocoder.dual_fc.bias2",
    "vocoder.dual_fc.factor1",
    "vocoder.dual_fc.factor2",
];

pub(crate) const MASK_NAME: &str = "vocoder.gru_a.mask";

impl VocoderWeights {
    pub fn zeros() -> Self {
        VocoderWeights {
            conv1_w: Array3::zeros((COND_DIM, STATIC_DIMS, FRAME_KERNEL)),
            conv1_b: Array1::zeros(COND_DIM),
            conv2_w: Array3::zeros((COND_DIM, COND_DIM, FRAME_KERNEL)),
            conv2_b: Array1::zeros(COND_DIM),
            fc1_w: Array2::zeros((COND_DIM, COND_DIM)),
            fc1_b: Array1::zeros(COND_DIM),
            fc2_w: Array2::zeros((COND_DIM, COND_DIM)),
            fc2_b: Array1::zeros(COND_DIM),
            embed_sig: Array2::zeros((CLASSES, EMBED_DIM)),
            embed_pred: Array2::zeros((CLASSES, EMBED_DIM)),
            embed_exc: Array2::zeros((CLASSES, EMBED_DIM)),
            gru_a_w_ih: Array2::zeros((3 * GRU_A, GRU_A_INPUT)),
            gru_a_w_hh: Array2::zeros((3 * GRU_A, GRU_A)),
            gru_a_b_ih: Array1::zeros(3 * GRU_A),
            gru_a_b_hh: Array1::zeros(3 * GRU_A),
            gru_b_w_ih: Array2::zeros((3 * GRU_B, GRU_B_INPUT)),
            gru_b_w_hh: Array2::zeros((3 * GRU_B, GRU_B)),
            gru_b_b_ih: Array1::zeros(3 * GRU_B),
            gru_b_b_hh: Array1::zeros(3 * GRU_B),
            fc_w1: Array2::zeros((CLASSES, GRU_B)),
            fc_w2: Array2::zeros((CLASSES, GRU_B)),
            fc_b1: Array1::zeros(CLASSES),
            fc_b2: Array1::zeros(CLASSES),
            fc_f1: Array1::zeros(CLASSES),
            fc_f2: Array1::zeros(CLASSES),
            gru_a_mask: None,
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, unit dual-FC factors, zero biases.
    pub fn random(seed: u64) -> Self {
        let mut w = Self::zeros();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        w.fc_f1.fill(1.0);
        w.fc_f2.fill(1.0);
        for (name, mut t) in w.tensors_mut() {
            let fan = match name {
                n if n.ends_with("conv1.weight") => STATIC_DIMS * FRAME_KERNEL,
                n if n.ends_with("conv2.weight") => COND_DIM * FRAME_KERNEL,
                n if n.ends_with("fc1.weight") || n.ends_with("fc2.weight") => COND_DIM,
                n if n.starts_with("vocoder.embed") => 1,
                "vocoder.gru_a.weight_ih" => GRU_A_INPUT,
                "vocoder.gru_a.weight_hh" => GRU_A,
                "vocoder.gru_b.weight_ih" => GRU_B_INPUT,
                "vocoder.gru_b.weight_hh"
                | "vocoder.dual_fc.weight1"
                | "vocoder.dual_fc.weight2" => GRU_B,
                _ => continue,
            };
            let bound = 1.0 / (fan as f64).sqrt();
            t.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        w
    }

    fn views(&self) -> Vec<ArrayViewD<'_, f64>> {
        vec![
            self.conv1_w.view().into_dyn(),
            self.conv1_b.view().into_dyn(),
            self.conv2_w.view().into_dyn(),
            self.conv2_b.view().into_dyn(),
            self.fc1_w.view().into_dyn(),
            self.fc1_b.view().into_dyn(),
            self.fc2_w.view().into_dyn(),
            self.fc2_b.view().into_dyn(),
            self.embed_sig.view().into_dyn(),
            self.embed_pred.view().into_dyn(),
            self.embed_exc.view().into_dyn(),
            self.gru_a_w_ih.view().into_dyn(),
            self.gru_a_w_hh.view().into_dyn(),
            self.gru_a_b_ih.view().into_dyn(),
            self.gru_a_b_hh.view().into_dyn(),
            self.gru_b_w_ih.view().into_dyn(),
            self.gru_b_w_hh.view().into_dyn(),
            self.gru_b_b_ih.view().into_dyn(),
            self.gru_b_b_hh.view().into_dyn(),
            self.fc_w1.view().into_dyn(),
            self.fc_w2.view().into_dyn(),
            self.fc_b1.view().into_dyn(),
            self.fc_b2.view().into_dyn(),
            self.fc_f1.view().into_dyn(),
            self.fc_f2.view().into_dyn(),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        let views = vec![
            self.conv1_w.view_mut().into_dyn(),
            self.conv1_b.view_mut().into_dyn(),
            self.conv2_w.view_mut().into_dyn(),
            self.conv2_b.view_mut().into_dyn(),
            self.fc1_w.view_mut().into_dyn(),
            self.fc1_b.view_mut().into_dyn(),
            self.fc2_w.view_mut().into_dyn(),
            self.fc2_b.view_mut().into_dyn(),
            self.embed_sig.view_mut().into_dyn(),
            self.embed_pred.view_mut().into_dyn(),
            self.embed_exc.view_mut().into_dyn(),
            self.gru_a_w_ih.view_mut().into_dyn(),
            self.gru_a_w_hh.view_mut().into_dyn(),
            self.gru_a_b_ih.view_mut().into_dyn(),
            self.gru_a_b_hh.view_mut().into_dyn(),
            self.gru_b_w_ih.view_mut().into_dyn(),
            self.gru_b_w_hh.view_mut().into_dyn(),
            self.gru_b_b_ih.view_mut().into_dyn(),
            self.gru_b_b_hh.view_mut().into_dyn(),
            self.fc_w1.view_mut().into_dyn(),
            self.fc_w2.view_mut().into_dyn(),
            self.fc_b1.view_mut().into_dyn(),
            self.fc_b2.view_mut().into_dyn(),
            self.fc_f1.view_mut().into_dyn(),
            self.fc_f2.view_mut().into_dyn(),
        ];
        NAMES.into_iter().zip(views).collect()
    }

    /// Every tensor with its file name; the mask is included when present.
    pub fn named_tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let mut out: Vec<_> = NAMES.into_iter().zip(self.views()).collect();
        if let Some(m) = &self.gru_a_mask {
            out.push((MASK_NAME, m.view().into_dyn()));
        }
        out
    }

    pub fn from_named(mut lookup: impl FnMut(&str) -> Option<ArrayD<f64>>) -> Result<Self> {
        let mut w = Self::zeros();
        for (name, mut dst) in w.tensors_mut() {
            let src = lookup(name).ok_or_else(|| Error::format(name, "tensor missing"))?;
            if src.shape() != dst.shape() {
                return Err(Error::format(
                    name,
                    format!("shape {:?}, expected {:?}", src.shape(), dst.shape()),
                ));
            }
            dst.assign(&src);
        }
        if let Some(m) = lookup(MASK_NAME) {
            let m = m
                .into_dimensionality::<Ix2>()
                .map_err(|_| Error::format(MASK_NAME, "expected rank 2"))?;
            w.gru_a_mask = Some(m);
        }
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let reference = Self::zeros();
        for ((name, a), b) in self.named_tensors().into_iter().zip(reference.views()) {
            if a.shape() != b.shape() {
                return Err(Error::format(
                    name,
                    format!("shape {:?}, expected {:?}", a.shape(), b.shape()),
                ));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(name, "non-finite entry"));
            }
        }
        if let Some(m) = &self.gru_a_mask {
            if m.dim() != self.gru_a_w_hh.dim() {
                return Err(Error::format(
                    MASK_NAME,
                    format!("shape {:?}, expected {:?}", m.dim(), self.gru_a_w_hh.dim()),
                ));
            }
            if m.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::format(MASK_NAME, "entries must be 0 or 1"));
            }
        }
        Ok(())
    }

    /// Recurrent GRU-A matrix with the mask applied.
    pub fn effective_gru_a_hh(&self) -> Array2<f64> {
        match &self.gru_a_mask {
            Some(m) => &self.gru_a_w_hh * m,
            None => self.gru_a_w_hh.clone(),
        }
    }

    /// Keeps the `1 - sparsity` fraction of 16x1 recurrent blocks with the
    /// largest norm in each gate, masks the rest, and zeroes masked weights.
    pub fn apply_block_sparsity(&mut self, sparsity: f64) -> Result<()> {
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::invalid(format!(
                "sparsity {sparsity} outside [0, 1)"
            )));
        }
        let blocks_per_col = GRU_A / BLOCK;
        let per_gate = blocks_per_col * GRU_A;
        let keep = ((1.0 - sparsity) * per_gate as f64).round() as usize;
        let current = self.effective_gru_a_hh();
        let mut mask = Array2::zeros((3 * GRU_A, GRU_A));
        for gate in 0..3 {
            let mut norms: Vec<(f64, usize)> = (0..per_gate)
                .map(|b| {
                    let (br, col) = (b / GRU_A, b % GRU_A);
                    let r0 = gate * GRU_A + br * BLOCK;
                    let n: f64 = (r0..r0 + BLOCK).map(|r| current[[r, col]].powi(2)).sum();
                    (n, b)
                })
                .collect();
            norms.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, b) in norms.iter().take(keep) {
                let (br, col) = (b / GRU_A, b % GRU_A);
                let r0 = gate * GRU_A + br * BLOCK;
                for r in r0..r0 + BLOCK {
                    mask[[r, col]] = 1.0;
                }
            }
        }
        self.gru_a_w_hh = &self.gru_a_w_hh * &mask;
        self.gru_a_mask = Some(mask);
        Ok(())
    }

    /// Fraction of masked recurrent weights, 0 without a mask.
    pub fn sparsity(&self) -> f64 {
        match &self.gru_a_mask {
            Some(m) => m.iter().filter(|&&v| v == 0.0).count() as f64 / m.len() as f64,
            None => 0.0,
        }
    }
}

/// Frame network: two width-3 convolutions and two affine layers, all tanh.
pub fn frame_condition(frames: &[AcousticFrame], w: &VocoderWeights) -> Result<Array2<f64>> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to condition"));
    }
    let x = Array2::from_shape_fn((frames.len(), STATIC_DIMS), |(t, j)| {
        frames[t].to_array()[j]
    });
    let h = conv_context(x.view(), &w.conv1_w, &w.conv1_b)?;
    let h = conv_context(h.view(), &w.conv2_w, &w.conv2_b)?;
    let mut h = h.dot(&w.fc1_w.t()) + &w.fc1_b;
    h.mapv_inplace(f64::tanh);
    let mut h = h.dot(&w.fc2_w.t()) + &w.fc2_b;
    h.mapv_inplace(f64::tanh);
    Ok(h)
}
