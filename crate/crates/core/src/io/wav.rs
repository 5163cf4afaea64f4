use std::path::Path;

use crate::dsp::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::format("wav header", msg),
        hound::Error::Unsupported => Error::format("wav format", "unsupported encoding"),
        other => Error::format("wav", other.to_string()),
    }
}

/// Reads 16-bit PCM mono 16 kHz audio, scaled by `1/32768`.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    // the file opened, so read failures past this point mean a short or malformed file
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| match e {
        hound::Error::IoError(io) => Error::format("wav header", io.to_string()),
        other => map_hound(path, other),
    })?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::format(
            "sample_rate",
            format!("{} Hz, expected {SAMPLE_RATE}", spec.sample_rate),
        ));
    }
    if spec.channels != 1 {
        return Err(Error::format(
            "channels",
            format!("{}, expected 1", spec.channels),
        ));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(
            "bits_per_sample",
            format!(
                "{:?} {}-bit, expected 16-bit PCM",
                spec.sample_format, spec.bits_per_sample
            ),
        ));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| match e {
            hound::Error::IoError(io) => Error::format("wav data", io.to_string()),
            other => map_hound(path, other),
        })?;
    AudioBuffer::new(samples)
}

/// Writes 16-bit PCM mono 16 kHz, rounding to nearest and clipping.
pub fn write_wav(a: &AudioBuffer, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &x in a.samples() {
        let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}
