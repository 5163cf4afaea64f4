use ndarray::{Array1, Array2, Array3, ArrayD, ArrayViewD, ArrayViewMutD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlpg::FULL_DIMS;

/// Layer sizes of the synthesizer network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesizerConfig {
    pub vocab: usize,
    pub embed_dim: usize,
    pub phonetic_channels: usize,
    pub pitch_channels: usize,
    /// Convolution width in frames; odd. 65 spans 32 frames each side.
    pub kernel: usize,
    pub lstm_hidden: usize,
    pub fc_dim: usize,
}

impl Default for SynthesizerConfig {
    fn default() -> Self {
        SynthesizerConfig {
            vocab: 64,
            embed_dim: 32,
            phonetic_channels: 128,
            pitch_channels: 32,
            kernel: 65,
            lstm_hidden: 512,
            fc_dim: 512,
        }
    }
}

impl SynthesizerConfig {
    /// Small sizes used by gradient checks and quick experiments.
    pub fn toy() -> Self {
        SynthesizerConfig {
            vocab: 5,
            embed_dim: 4,
            phonetic_channels: 8,
            pitch_channels: 4,
            kernel: 5,
            lstm_hidden: 8,
            fc_dim: 8,
        }
    }

    /// Toy vocabulary and kernel with 32-wide hidden layers; trains quickly
    /// with plain gradient descent.
    pub fn small() -> Self {
        SynthesizerConfig {
            phonetic_channels: 32,
            lstm_hidden: 32,
            fc_dim: 32,
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.vocab,
            self.embed_dim,
            self.phonetic_channels,
            self.pitch_channels,
            self.kernel,
            self.lstm_hidden,
            self.fc_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid("synthesizer sizes must be positive"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::invalid(format!(
                "kernel {} must be odd",
                self.kernel
            )));
        }
        Ok(())
    }

    fn lstm_input(&self) -> usize {
        self.phonetic_channels + self.pitch_channels
    }
}

/// Trainable tensors of the synthesizer plus the MLPG variances shipped with it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizerWeights {
    pub embedding: Array2<f64>,
    pub phonetic_conv_w: Array3<f64>,
    pub phonetic_conv_b: Array1<f64>,
    pub pitch_conv_w: Array3<f64>,
    pub pitch_conv_b: Array1<f64>,
    /// Rows grouped `[input | forget | cell | output]`.
    pub lstm_w_ih: Array2<f64>,
    pub lstm_w_hh: Array2<f64>,
    pub lstm_b: Array1<f64>,
    pub fc_w: [Array2<f64>; 3],
    pub fc_b: [Array1<f64>; 3],
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    /// Per-dimension variances used by parameter generation; not trained.
    pub mlpg_variances: Array1<f64>,
}

pub(crate) const TENSOR_NAMES: [&str; 16] = [
    "synth.embedding",
    "synth.phonetic_conv.weight",
    "synth.phonetic_conv.bias",
    "synth.pitch_conv.weight",
    "synth.pitch_conv.bias",
    "synth.lstm.weight_ih",
    "synth.lstm.weight_hh",
    "synth.lstm.bias",
    "synth.fc1.weight",
    "synth.fc1.bias",
    "synth.fc2.weight",
    "synth.fc2.bias",
    "synth.fc3.weight",
    "synth.fc3.bias",
    "synth.head.weight",
    "synth.head.bias",
];

pub(crate) const VARIANCE_NAME: &str = "mlpg.variances";

impl SynthesizerWeights {
    pub fn zeros(cfg: &SynthesizerConfig) -> Self {
        let h4 = 4 * cfg.lstm_hidden;
        let f = cfg.fc_dim;
        SynthesizerWeights {
            embedding: Array2::zeros((cfg.vocab, cfg.embed_dim)),
            phonetic_conv_w: Array3::zeros((cfg.phonetic_channels, cfg.embed_dim, cfg.kernel)),
            phonetic_conv_b: Array1::zeros(cfg.phonetic_channels),
            pitch_conv_w: Array3::zeros((cfg.pitch_channels, 1, cfg.kernel)),
            pitch_conv_b: Array1::zeros(cfg.pitch_channels),
            lstm_w_ih: Array2::zeros((h4, cfg.lstm_input())),
            lstm_w_hh: Array2::zeros((h4, cfg.lstm_hidden)),
            lstm_b: Array1::zeros(h4),
            fc_w: [
                Array2::zeros((f, cfg.lstm_hidden)),
                Array2::zeros((f, f)),
                Array2::zeros((f, f)),
            ],
            fc_b: [Array1::zeros(f), Array1::zeros(f), Array1::zeros(f)],
            head_w: Array2::zeros((FULL_DIMS, f)),
            head_b: Array1::zeros(FULL_DIMS),
            mlpg_variances: Array1::ones(FULL_DIMS),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization; biases zero, variances one.
    pub fn random(cfg: &SynthesizerConfig, seed: u64) -> Self {
        let mut w = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fans = [
            1,
            cfg.embed_dim * cfg.kernel,
            0,
            cfg.kernel,
            0,
            cfg.lstm_input(),
            cfg.lstm_hidden,
            0,
            cfg.lstm_hidden,
            0,
            cfg.fc_dim,
            0,
            cfg.fc_dim,
            0,
            cfg.fc_dim,
            0,
        ];
        for ((_, mut t), fan) in w.tensors_mut().into_iter().zip(fans) {
            if fan == 0 {
                continue;
            }
            let bound = 1.0 / (fan as f64).sqrt();
            t.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        w
    }

    /// Layer sizes implied by the tensor shapes.
    pub fn config(&self) -> SynthesizerConfig {
        SynthesizerConfig {
            vocab: self.embedding.nrows(),
            embed_dim: self.embedding.ncols(),
            phonetic_channels: self.phonetic_conv_w.dim().0,
            pitch_channels: self.pitch_conv_w.dim().0,
            kernel: self.phonetic_conv_w.dim().2,
            lstm_hidden: self.lstm_w_hh.ncols(),
            fc_dim: self.head_w.ncols(),
        }
    }

    /// Trainable tensors in a fixed order with their file names.
    pub fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let views = vec![
            self.embedding.view().into_dyn(),
            self.phonetic_conv_w.view().into_dyn(),
            self.phonetic_conv_b.view().into_dyn(),
            self.pitch_conv_w.view().into_dyn(),
            self.pitch_conv_b.view().into_dyn(),
            self.lstm_w_ih.view().into_dyn(),
            self.lstm_w_hh.view().into_dyn(),
            self.lstm_b.view().into_dyn(),
            self.fc_w[0].view().into_dyn(),
            self.fc_b[0].view().into_dyn(),
            self.fc_w[1].view().into_dyn(),
            self.fc_b[1].view().into_dyn(),
            self.fc_w[2].view().into_dyn(),
            self.fc_b[2].view().into_dyn(),
            self.head_w.view().into_dyn(),
            self.head_b.view().into_dyn(),
        ];
        TENSOR_NAMES.into_iter().zip(views).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        let [f0, f1, f2] = &mut self.fc_w;
        let [b0, b1, b2] = &mut self.fc_b;
        let views = vec![
            self.embedding.view_mut().into_dyn(),
            self.phonetic_conv_w.view_mut().into_dyn(),
            self.phonetic_conv_b.view_mut().into_dyn(),
            self.pitch_conv_w.view_mut().into_dyn(),
            self.pitch_conv_b.view_mut().into_dyn(),
            self.lstm_w_ih.view_mut().into_dyn(),
            self.lstm_w_hh.view_mut().into_dyn(),
            self.lstm_b.view_mut().into_dyn(),
            f0.view_mut().into_dyn(),
            b0.view_mut().into_dyn(),
            f1.view_mut().into_dyn(),
            b1.view_mut().into_dyn(),
            f2.view_mut().into_dyn(),
            b2.view_mut().into_dyn(),
            self.head_w.view_mut().into_dyn(),
            self.head_b.view_mut().into_dyn(),
        ];
        TENSOR_NAMES.into_iter().zip(views).collect()
    }

    /// All named tensors including the variances, for serialization.
    pub fn named_tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let mut out = self.tensors();
        out.push((VARIANCE_NAME, self.mlpg_variances.view().into_dyn()));
        out
    }

    /// Rebuilds weights from named tensors; shapes must be self-consistent.
    pub fn from_named(mut lookup: impl FnMut(&str) -> Option<ArrayD<f64>>) -> Result<Self> {
        let mut take = |name: &str, rank: usize| -> Result<ArrayD<f64>> {
            let t = lookup(name).ok_or_else(|| Error::format(name, "tensor missing"))?;
            if t.ndim() != rank {
                return Err(Error::format(
                    name,
                    format!("expected rank {rank}, got {}", t.ndim()),
                ));
            }
            Ok(t)
        };
        let d2 = |t: ArrayD<f64>| {
            t.into_dimensionality::<ndarray::Ix2>()
                .expect("rank checked")
        };
        let d1 = |t: ArrayD<f64>| {
            t.into_dimensionality::<ndarray::Ix1>()
                .expect("rank checked")
        };
        let d3 = |t: ArrayD<f64>| {
            t.into_dimensionality::<ndarray::Ix3>()
                .expect("rank checked")
        };
        let w = SynthesizerWeights {
            embedding: d2(take(TENSOR_NAMES[0], 2)?),
            phonetic_conv_w: d3(take(TENSOR_NAMES[1], 3)?),
            phonetic_conv_b: d1(take(TENSOR_NAMES[2], 1)?),
            pitch_conv_w: d3(take(TENSOR_NAMES[3], 3)?),
            pitch_conv_b: d1(take(TENSOR_NAMES[4], 1)?),
            lstm_w_ih: d2(take(TENSOR_NAMES[5], 2)?),
            lstm_w_hh: d2(take(TENSOR_NAMES[6], 2)?),
            lstm_b: d1(take(TENSOR_NAMES[7], 1)?),
            fc_w: [
                d2(take(TENSOR_NAMES[8], 2)?),
                d2(take(TENSOR_NAMES[10], 2)?),
                d2(take(TENSOR_NAMES[12], 2)?),
            ],
            fc_b: [
                d1(take(TENSOR_NAMES[9], 1)?),
                d1(take(TENSOR_NAMES[11], 1)?),
                d1(take(TENSOR_NAMES[13], 1)?),
            ],
            head_w: d2(take(TENSOR_NAMES[14], 2)?),
            head_b: d1(take(TENSOR_NAMES[15], 1)?),
            mlpg_variances: match lookup(VARIANCE_NAME) {
                Some(t) if t.ndim() == 1 => d1(t),
                Some(_) => return Err(Error::format(VARIANCE_NAME, "expected rank 1")),
                None => Array1::ones(FULL_DIMS),
            },
        };
        w.validate()?;
        Ok(w)
    }

    /// Checks every shape against the implied configuration and all entries for finiteness.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.config();
        cfg.validate()?;
        let expected = Self::zeros(&cfg);
        for ((name, a), (_, b)) in self
            .named_tensors()
            .into_iter()
            .zip(expected.named_tensors())
        {
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
        if self.mlpg_variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::format(VARIANCE_NAME, "variances must be positive"));
        }
        Ok(())
    }

    /// `self += scale * other` over the trainable tensors.
    pub fn scaled_add(&mut self, scale: f64, other: &SynthesizerWeights) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    #[allow(dead_code)]
    pub(crate) fn shape_of(name: &str, cfg: &SynthesizerConfig) -> Option<IxDyn> {
        Self::zeros(cfg)
            .named_tensors()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| IxDyn(t.shape()))
    }
}
