//! 8-bit μ-law companding over `[-1, 1]`.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const MU: f64 = 255.0;

/// Code for zero amplitude.
pub const MULAW_ZERO: u8 = 128;

pub fn mulaw_encode(x: f64) -> u8 {
    let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
    let u = x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln();
    let q = (128.0 + 128.0 * u).round();
    q.clamp(0.0, 255.0) as u8
}

/// Decoded amplitude of a code. Infallible counterpart of [`mulaw_decode_checked`]
/// for callers that already hold a `u8`.
#[inline]
pub fn mulaw_decode(q: u8) -> f64 {
    decode_table()[q as usize]
}

/// Decodes a code given as a wider integer, rejecting values outside `0..=255`.
pub fn mulaw_decode_checked(q: i64) -> Result<f64> {
    if !(0..=255).contains(&q) {
        return Err(Error::invalid(format!("mu-law code {q} outside 0..=255")));
    }
    Ok(mulaw_decode(q as u8))
}

fn decode_exact(q: u8) -> f64 {
    let u = (q as f64 - 128.0) / 128.0;
    u.signum() * ((1.0 + MU).powf(u.abs()) - 1.0) / MU
}

fn decode_table() -> &'static [f64; 256] {
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; 256];
        for (q, v) in t.iter_mut().enumerate() {
            *v = decode_exact(q as u8);
        }
        t
    })
}

/// Largest gap between neighbouring reconstruction levels on `[-1, 1]`,
/// counting the gap between the top code and full scale. Bounds
/// `|x - decode(encode(x))|` for every `x` in range.
pub fn mulaw_max_step() -> f64 {
    let t = decode_table();
    let inner = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    inner.max(1.0 - t[255]).max(t[0] + 1.0)
}
