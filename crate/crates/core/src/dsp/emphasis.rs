use super::AudioBuffer;
use crate::error::{Error, Result};

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "emphasis coefficient {beta} outside [0, 1)"
        )));
    }
    Ok(())
}

/// `y[n] = x[n] - beta * x[n-1]` with `x[-1] = 0`.
pub fn preemphasis(a: &AudioBuffer, beta: f64) -> Result<AudioBuffer> {
    check_beta(beta)?;
    let mut out = a.samples().to_vec();
    preemphasis_in_place(&mut out, beta);
    AudioBuffer::new(out)
}

/// `y[n] = x[n] + beta * y[n-1]` with `y[-1] = 0`.
pub fn deemphasis(a: &AudioBuffer, beta: f64) -> Result<AudioBuffer> {
    check_beta(beta)?;
    let mut out = a.samples().to_vec();
    deemphasis_in_place(&mut out, beta);
    AudioBuffer::new(out)
}

pub(crate) fn preemphasis_in_place(x: &mut [f64], beta: f64) {
    let mut prev = 0.0;
    for v in x.iter_mut() {
        let cur = *v;
        *v = cur - beta * prev;
        prev = cur;
    }
}

pub(crate) fn deemphasis_in_place(x: &mut [f64], beta: f64) {
    let mut prev = 0.0;
    for v in x.iter_mut() {
        *v += beta * prev;
        prev = *v;
    }
}
