//! File formats: WAV audio, feature tracks, weight files, unit lists and run configuration.

mod config;
mod features_file;
mod units;
mod wav;
mod weights_file;

pub use config::{load_config, RunConfig};
pub use features_file::{
    decode_features, encode_features, read_features, write_features, FEATURE_MAGIC,
};
pub use units::{format_units, parse_units, read_units, write_units};
pub use wav::{read_wav, write_wav};
pub use weights_file::{
    decode_tensors, encode_tensors, read_synthesizer, read_tensors, read_vocoder,
    write_synthesizer, write_tensors, write_vocoder, NamedTensor, WEIGHT_MAGIC,
};

/// Version written into binary headers and the only one accepted on read.
pub const FORMAT_VERSION: u16 = 1;

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(Error::format(
                field,
                format!("truncated: expected {n} bytes, found {remaining}"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    pub fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2, field)?.try_into().expect("2 bytes"),
        ))
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, field)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(Error::format(
                "magic",
                format!(
                    "expected {:?}, found {:?}",
                    String::from_utf8_lossy(magic),
                    String::from_utf8_lossy(got)
                ),
            ));
        }
        let version = self.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {version}"),
            ));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(
                "payload",
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}

/// Reads `n` little-endian f32 values as f64.
pub(crate) fn read_f32s(c: &mut Cursor<'_>, n: usize, field: &str) -> Result<Vec<f64>> {
    let bytes = n
        .checked_mul(4)
        .ok_or_else(|| Error::format(field, "size overflow"))?;
    let raw = c.take(bytes, field)?;
    Ok(raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect())
}

pub(crate) fn push_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}
