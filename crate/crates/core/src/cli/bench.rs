use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CliResult, Stage};
use crate::dsp::{Cepstrum, FRAME_SIZE, NB_BANDS, SAMPLE_RATE};
use crate::error::Error;
use crate::features::{AcousticFrame, FeatureTrack};
use crate::io;
use crate::prosody::normalize_log_pitch;
use crate::vocoder::{synthesize_with, SampleNet, TemperaturePolicy, VocoderWeights};

const RUNS: usize = 3;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Vocoder weights; random weights when absent.
    #[arg(long)]
    pub vocoder: Option<PathBuf>,
    /// Seconds of audio per run.
    #[arg(long, default_value_t = 10.0)]
    pub seconds: f64,
    /// Prune random weights to this block sparsity.
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub samples: usize,
    pub density: f64,
    /// Wall-clock seconds of each run.
    pub wall: Vec<f64>,
}

impl BenchReport {
    pub fn audio_secs(&self) -> f64 {
        self.samples as f64 / SAMPLE_RATE as f64
    }

    /// Real-time factor of every run: audio seconds per wall second.
    pub fn rtfs(&self) -> Vec<f64> {
        self.wall.iter().map(|w| self.audio_secs() / w).collect()
    }

    pub fn median_rtf(&self) -> f64 {
        let mut r = self.rtfs();
        r.sort_by(f64::total_cmp);
        r[r.len() / 2]
    }

    /// `(max - min) / median` of the run RTFs.
    pub fn spread(&self) -> f64 {
        let r = self.rtfs();
        let hi = r.iter().cloned().fold(f64::MIN, f64::max);
        let lo = r.iter().cloned().fold(f64::MAX, f64::min);
        (hi - lo) / self.median_rtf()
    }

    pub fn print(&self) {
        println!("run      wall_s   samples/s      rtf");
        for (i, (w, r)) in self.wall.iter().zip(self.rtfs()).enumerate() {
            println!(
                "{:>3} {:>11.3} {:>11.0} {:>8.3}",
                i + 1,
                w,
                self.samples as f64 / w,
                r
            );
        }
        println!("density={:.3}", self.density);
        println!("RTF={:.3}", self.median_rtf());
    }
}

/// Seeded track with smooth cepstra, 120 Hz pitch and correlation 0.8.
pub fn synthetic_track(seconds: f64, seed: u64) -> crate::Result<FeatureTrack> {
    let n = (seconds * SAMPLE_RATE as f64 / FRAME_SIZE as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..NB_BANDS)
        .map(|k| rng.gen_range(-1.0..1.0) / (1 + k) as f64)
        .collect();
    let pitch = normalize_log_pitch(120f64.log2());
    let frames = (0..n)
        .map(|t| {
            let mut c = [0.0; NB_BANDS];
            for (k, v) in c.iter_mut().enumerate() {
                *v = base[k] + 0.2 * (0.05 * t as f64 + k as f64).sin() / (1 + k) as f64;
            }
            c[0] += 2.0;
            Ok(AcousticFrame {
                cepstrum: Cepstrum::new(c)?,
                pitch,
                pitch_corr: 0.8,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    FeatureTrack::new(frames)
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<BenchReport> {
    if a.seconds.is_nan() || a.seconds < 1.0 {
        return Err(Error::invalid("--seconds must be at least 1")).stage("bench");
    }
    let weights = match &a.vocoder {
        Some(p) => io::read_vocoder(p, false).stage("load")?,
        None => {
            let mut w = VocoderWeights::random(a.seed);
            if let Some(s) = a.sparsity {
                w.apply_block_sparsity(s).stage("bench")?;
            }
            w
        }
    };
    let net = SampleNet::new(&weights).stage("bench")?;
    let track = synthetic_track(a.seconds, a.seed).stage("bench")?;
    let mut wall = Vec::with_capacity(RUNS);
    let mut samples = 0;
    for run in 0..RUNS {
        let start = Instant::now();
        let audio = synthesize_with(
            &track,
            &net,
            a.seed + run as u64,
            TemperaturePolicy::default(),
        )
        .stage("vocoder")?;
        wall.push(start.elapsed().as_secs_f64());
        samples = audio.len();
    }
    Ok(BenchReport {
        samples,
        density: net.density(),
        wall,
    })
}
