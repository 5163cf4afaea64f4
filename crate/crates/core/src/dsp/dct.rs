use std::f64::consts::PI;

use crate::error::{Error, Result};

fn scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II.
pub fn dct_orthonormal(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("dct of an empty vector"));
    }
    let n = x.len();
    Ok((0..n)
        .map(|k| {
            let acc: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos())
                .sum();
            scale(k, n) * acc
        })
        .collect())
}

/// Orthonormal DCT-III, the exact inverse of [`dct_orthonormal`].
pub fn idct_orthonormal(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("idct of an empty vector"));
    }
    let n = x.len();
    Ok((0..n)
        .map(|i| {
            x.iter()
                .enumerate()
                .map(|(k, &v)| {
                    scale(k, n) * v * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos()
                })
                .sum()
        })
        .collect())
}
