//! Gradient-descent training and warm-start adaptation of the synthesizer network.

mod backward;

use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backward::{backward, gradient_check};

use crate::acoustic::{predict_acoustics, SynthesizerWeights};
use crate::error::{Error, Result};
use crate::mlpg::FULL_DIMS;
use crate::prosody::FrameInput;

/// Mean squared difference over every entry.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} does not match target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("empty prediction"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Utterances averaged per gradient step.
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            batch: 1,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate {} must be non-negative",
                self.learning_rate
            )));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        if self.patience > self.max_epochs {
            return Err(Error::invalid(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One utterance: frame inputs and their `T x 60` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub frames: Vec<FrameInput>,
    pub targets: Array2<f64>,
}

impl Utterance {
    pub fn new(frames: Vec<FrameInput>, targets: Array2<f64>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("utterance has no frames"));
        }
        if targets.dim() != (frames.len(), FULL_DIMS) {
            return Err(Error::invalid(format!(
                "targets are {:?}, expected ({}, {FULL_DIMS})",
                targets.dim(),
                frames.len()
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("targets contain non-finite values"));
        }
        Ok(Utterance { frames, targets })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<Utterance>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Dataset {
    /// Explicit split; indices must be disjoint and cover every item.
    pub fn with_split(
        items: Vec<Utterance>,
        train: Vec<usize>,
        validation: Vec<usize>,
    ) -> Result<Self> {
        let mut seen = vec![false; items.len()];
        for &i in train.iter().chain(&validation) {
            match seen.get_mut(i) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(Error::invalid(format!("item {i} appears in both splits"))),
                None => return Err(Error::invalid(format!("split index {i} out of range"))),
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("splits do not cover every item"));
        }
        Ok(Dataset {
            items,
            train,
            validation,
        })
    }

    /// Seeded random split holding out `floor(fraction * n)` items, at least
    /// one when there are two or more items and the fraction is positive.
    pub fn split(items: Vec<Utterance>, fraction: f64, seed: u64) -> Result<Self> {
        let n = items.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut n_val = (fraction * n as f64).floor() as usize;
        if fraction > 0.0 && n >= 2 {
            n_val = n_val.max(1);
        }
        let validation = idx[..n_val].to_vec();
        let train = idx[n_val..].to_vec();
        Self::with_split(items, train, validation)
    }

    fn mean_loss(&self, which: &[usize], w: &SynthesizerWeights) -> Result<Option<f64>> {
        if which.is_empty() {
            return Ok(None);
        }
        let mut sum = 0.0;
        for &i in which {
            let u = &self.items[i];
            sum += mse_loss(&predict_acoustics(&u.frames, w)?.means, &u.targets)?;
        }
        Ok(Some(sum / which.len() as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

impl EpochRecord {
    fn score(&self) -> f64 {
        self.val_loss.unwrap_or(self.train_loss)
    }
}

/// Per-epoch losses; epoch 0 evaluates the initial weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl History {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_loss")?;
        for r in &self.records {
            match r.val_loss {
                Some(v) => writeln!(out, "{},{},{}", r.epoch, r.train_loss, v)?,
                None => writeln!(out, "{},{},", r.epoch, r.train_loss)?,
            }
        }
        Ok(())
    }
}

fn evaluate(
    data: &Dataset,
    w: &SynthesizerWeights,
    epoch: usize,
    last_finite: usize,
) -> Result<EpochRecord> {
    let train_loss = data
        .mean_loss(&data.train, w)
        .map_err(|_| Error::TrainingDiverged {
            last_finite_epoch: last_finite,
        })?
        .expect("train split is non-empty");
    let val_loss = data
        .mean_loss(&data.validation, w)
        .map_err(|_| Error::TrainingDiverged {
            last_finite_epoch: last_finite,
        })?;
    if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged {
            last_finite_epoch: last_finite,
        });
    }
    Ok(EpochRecord {
        epoch,
        train_loss,
        val_loss,
    })
}

/// Plain gradient descent from `init`, returning the weights of the epoch with
/// the lowest validation loss (train loss when there is no validation split).
pub fn train(
    data: &Dataset,
    cfg: &TrainConfig,
    init: SynthesizerWeights,
) -> Result<(SynthesizerWeights, History)> {
    cfg.validate()?;
    init.validate()?;
    if data.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = init;
    let first = evaluate(data, &w, 0, 0)?;
    let mut history = History {
        records: vec![first],
        best_epoch: 0,
    };
    let mut best = w.clone();
    let mut best_score = first.score();
    let mut since_best = 0;
    let mut order = data.train.clone();
    for epoch in 1..=cfg.max_epochs {
        if since_best >= cfg.patience {
            break;
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let mut grad: Option<SynthesizerWeights> = None;
            for &i in chunk {
                let u = &data.items[i];
                let (_, g) =
                    backward(&u.frames, &u.targets, &w).map_err(|_| Error::TrainingDiverged {
                        last_finite_epoch: epoch - 1,
                    })?;
                match grad.as_mut() {
                    Some(acc) => acc.scaled_add(1.0, &g),
                    None => grad = Some(g),
                }
            }
            let grad = grad.expect("chunks are non-empty");
            w.scaled_add(-cfg.learning_rate / chunk.len() as f64, &grad);
        }
        let rec = evaluate(data, &w, epoch, epoch - 1)?;
        log::debug!(
            "epoch {epoch}: train {} val {:?}",
            rec.train_loss,
            rec.val_loss
        );
        history.records.push(rec);
        if rec.score() < best_score {
            best_score = rec.score();
            best = w.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
    }
    Ok((best, history))
}

/// Warm-start training from `base` with early stopping on validation loss.
pub fn adapt(
    base: &SynthesizerWeights,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(SynthesizerWeights, History)> {
    train(data, cfg, base.clone())
}
