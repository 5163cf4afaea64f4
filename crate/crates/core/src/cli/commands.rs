use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;

use super::{
    AdaptArgs, AnalyzeArgs, CliResult, EnhanceArgs, InitArgs, MlpgArgs, Stage, SynthesizeArgs,
    TrainArgs, TrainingFlags, VocodeArgs, WeightKind,
};
use crate::acoustic::{predict_acoustics, SynthesizerConfig, SynthesizerWeights};
use crate::dsp::{preemphasis, PREEMPHASIS};
use crate::enhance::{enhance_with, EnhanceConfig};
use crate::error::Error;
use crate::features::{extract_excitation, extract_features, AcousticFrame, FeatureTrack};
use crate::io::{self, RunConfig};
use crate::mlpg::{append_deltas, mlpg_solve, MlpgProblem, FULL_DIMS};
use crate::prosody::{units_to_frames, ProsodyUnit};
use crate::trainer::{train, Dataset, TrainConfig, Utterance};
use crate::vocoder::{cepstrum_to_lpc, synthesize, VocoderWeights};

/// Wall-clock time per named stage.
#[derive(Debug, Default, Clone)]
pub struct StageTimer {
    pub stages: Vec<(&'static str, f64)>,
}

impl StageTimer {
    pub fn run<T>(
        &mut self,
        name: &'static str,
        f: impl FnOnce() -> crate::Result<T>,
    ) -> CliResult<T> {
        let start = Instant::now();
        let out = f().stage(name);
        self.stages.push((name, start.elapsed().as_secs_f64()));
        out
    }

    pub fn report(&self) {
        for (name, secs) in &self.stages {
            eprintln!("{name:>10} {:9.3} ms", secs * 1e3);
        }
    }
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => io::load_config(p).stage("config"),
        None => Ok(RunConfig::default()),
    }
}

/// Acoustic prediction plus parameter generation, without enhancement.
pub fn units_to_track(
    units: &[ProsodyUnit],
    w: &SynthesizerWeights,
) -> crate::Result<FeatureTrack> {
    timed_track(units, w, &mut StageTimer::default()).map_err(|e| e.source)
}

fn timed_track(
    units: &[ProsodyUnit],
    w: &SynthesizerWeights,
    timer: &mut StageTimer,
) -> CliResult<FeatureTrack> {
    let frames = timer.run("prosody", || units_to_frames(units))?;
    let acoustic = timer.run("acoustic", || predict_acoustics(&frames, w))?;
    timer.run("mlpg", || {
        let mut variances = [0.0; FULL_DIMS];
        variances
            .iter_mut()
            .zip(w.mlpg_variances.iter())
            .for_each(|(d, s)| *d = *s);
        let statics = mlpg_solve(&MlpgProblem::new(acoustic.rows(), variances)?)?;
        let frames = statics
            .iter()
            .map(|s| AcousticFrame::from_slice(s))
            .collect::<crate::Result<Vec<_>>>()?;
        FeatureTrack::new(frames)
    })
}

fn enhance_track(track: &mut FeatureTrack, cfg: &EnhanceConfig) -> crate::Result<()> {
    for f in track.frames_mut() {
        f.cepstrum = enhance_with(&f.cepstrum, cfg)?;
    }
    Ok(())
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let audio = io::read_wav(&a.input).stage("input")?;
    let track = extract_features(&audio).stage("features")?;
    io::write_features(&track, &a.out).stage("output")?;
    if let Some(path) = &a.excitation {
        let lpc: Vec<_> = track
            .frames()
            .iter()
            .map(|f| cepstrum_to_lpc(&f.cepstrum))
            .collect();
        let codes = preemphasis(&audio, PREEMPHASIS)
            .and_then(|pre| extract_excitation(&pre, &lpc))
            .stage("excitation")?;
        std::fs::write(path, codes)
            .map_err(|e| Error::io(path, e))
            .stage("output")?;
    }
    Ok(())
}

/// Runs the full pipeline; returns the stage timings.
pub fn cmd_synthesize(a: &SynthesizeArgs) -> CliResult<StageTimer> {
    let cfg = load_config(a.config.as_deref())?;
    let mut timer = StageTimer::default();
    let units = timer.run("input", || io::read_units(&a.units))?;
    let synth = timer.run("load", || {
        io::read_synthesizer(&a.acoustic, cfg.strict_weights)
    })?;
    let voc = timer.run("load", || io::read_vocoder(&a.vocoder, cfg.strict_weights))?;
    let mut track = timed_track(&units, &synth, &mut timer)?;
    if !a.no_enhance {
        timer.run("enhance", || enhance_track(&mut track, &cfg.enhance))?;
    }
    let seed = a.seed.unwrap_or(cfg.seed);
    let audio = timer.run("vocoder", || {
        synthesize(&track, &voc, seed, cfg.temperature)
    })?;
    timer.run("output", || io::write_wav(&audio, &a.out))?;
    timer.report();
    Ok(timer)
}

pub fn cmd_vocode(a: &VocodeArgs) -> CliResult<()> {
    let cfg = load_config(a.config.as_deref())?;
    let track = io::read_features(&a.features).stage("input")?;
    let voc = io::read_vocoder(&a.vocoder, cfg.strict_weights).stage("load")?;
    let audio =
        synthesize(&track, &voc, a.seed.unwrap_or(cfg.seed), cfg.temperature).stage("vocoder")?;
    io::write_wav(&audio, &a.out).stage("output")
}

pub fn cmd_enhance(a: &EnhanceArgs) -> CliResult<()> {
    let mut track = io::read_features(&a.input).stage("input")?;
    let cfg = EnhanceConfig {
        alpha: a.alpha,
        first_scaled: a.first_scaled,
    };
    enhance_track(&mut track, &cfg).stage("enhance")?;
    io::write_features(&track, &a.out).stage("output")
}

pub fn cmd_mlpg(a: &MlpgArgs) -> CliResult<()> {
    let units = io::read_units(&a.units).stage("input")?;
    let synth = io::read_synthesizer(&a.acoustic, false).stage("load")?;
    let track = units_to_track(&units, &synth).stage("mlpg")?;
    io::write_features(&track, &a.out).stage("output")
}

/// Reads a manifest of `units_path features_path` lines; relative paths are
/// resolved against the manifest's directory.
fn load_utterances(manifest: &Path) -> crate::Result<Vec<Utterance>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| -> PathBuf {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::format(
                format!("manifest line {}", i + 1),
                "expected two paths",
            ));
        }
        let (units_path, feat_path) = (resolve(parts[0]), resolve(parts[1]));
        let frames = units_to_frames(&io::read_units(&units_path)?)?;
        let track = io::read_features(&feat_path)?;
        if track.len() != frames.len() {
            return Err(Error::format(
                feat_path.display().to_string(),
                format!("{} frames, units give {}", track.len(), frames.len()),
            ));
        }
        let full = append_deltas(&track.statics());
        let targets = Array2::from_shape_fn((full.len(), FULL_DIMS), |(t, j)| full[t][j]);
        items.push(Utterance::new(frames, targets)?);
    }
    if items.is_empty() {
        return Err(Error::invalid("manifest lists no utterances"));
    }
    Ok(items)
}

/// Flags override the config file; an unset patience is capped at the epoch count.
fn train_config(flags: &TrainingFlags, base: TrainConfig) -> TrainConfig {
    let max_epochs = flags.epochs.unwrap_or(base.max_epochs);
    TrainConfig {
        learning_rate: flags.learning_rate.unwrap_or(base.learning_rate),
        max_epochs,
        patience: flags.patience.unwrap_or(base.patience.min(max_epochs)),
        batch: flags.batch.unwrap_or(base.batch),
        seed: flags.seed.unwrap_or(base.seed),
        ..base
    }
}

fn run_training(flags: &TrainingFlags, init: InitWeights) -> CliResult<()> {
    let cfg = load_config(flags.config.as_deref())?;
    let tc = train_config(flags, cfg.train.clone());
    let items = load_utterances(&flags.data).stage("data")?;
    let init = match init {
        InitWeights::File(p) => io::read_synthesizer(&p, cfg.strict_weights).stage("load")?,
        InitWeights::Random => {
            let max_label = items
                .iter()
                .flat_map(|u| u.frames.iter().map(|f| f.label_id as usize))
                .max()
                .unwrap_or(0);
            let sc = SynthesizerConfig {
                vocab: cfg.synthesizer.vocab.max(max_label + 1),
                ..cfg.synthesizer
            };
            sc.validate().stage("init")?;
            SynthesizerWeights::random(&sc, tc.seed)
        }
    };
    let data = Dataset::split(items, tc.validation_fraction, tc.seed).stage("data")?;
    let (weights, history) = train(&data, &tc, init).stage("train")?;
    if let Some(p) = &flags.history {
        let file = std::fs::File::create(p)
            .map_err(|e| Error::io(p, e))
            .stage("output")?;
        history
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(p, e))
            .stage("output")?;
    }
    eprintln!(
        "best epoch {} of {}",
        history.best_epoch,
        history.records.len().saturating_sub(1)
    );
    io::write_synthesizer(&weights, &flags.out).stage("output")
}

enum InitWeights {
    File(PathBuf),
    Random,
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let init = match &a.init {
        Some(p) => InitWeights::File(p.clone()),
        None => InitWeights::Random,
    };
    run_training(&a.flags, init)
}

pub fn cmd_adapt(a: &AdaptArgs) -> CliResult<()> {
    run_training(&a.flags, InitWeights::File(a.base.clone()))
}

pub fn cmd_init(a: &InitArgs) -> CliResult<()> {
    match a.kind {
        WeightKind::Synthesizer => {
            let mut cfg = if a.toy {
                SynthesizerConfig::toy()
            } else {
                SynthesizerConfig::default()
            };
            if let Some(v) = a.vocab {
                cfg.vocab = v;
            }
            cfg.validate().stage("init")?;
            io::write_synthesizer(&SynthesizerWeights::random(&cfg, a.seed), &a.out).stage("output")
        }
        WeightKind::Vocoder => {
            let mut w = VocoderWeights::random(a.seed);
            if let Some(s) = a.sparsity {
                w.apply_block_sparsity(s).stage("init")?;
            }
            io::write_vocoder(&w, &a.out).stage("output")
        }
    }
}
