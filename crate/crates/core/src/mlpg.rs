//! Maximum-likelihood parameter generation.
//!
//! Each static dimension is solved independently from its static, delta and
//! delta-delta means. The window matrix `W` stacks the identity, the delta
//! window `[-0.5, 0, 0.5]` and the acceleration window `[1, -2, 1]`, with
//! edge frames replicated where a window overhangs the sequence. The normal
//! equations `W' S^-1 W c = W' S^-1 mu` are pentadiagonal and are solved by a
//! banded Cholesky factorization.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Static parameters per frame.
pub const STATIC_DIMS: usize = 20;
/// Statics, deltas and delta-deltas.
pub const FULL_DIMS: usize = 3 * STATIC_DIMS;

/// Delta window taps at offsets -1, 0, +1.
pub const DELTA_WINDOW: [f64; 3] = [-0.5, 0.0, 0.5];
/// Acceleration window taps at offsets -1, 0, +1.
pub const ACCEL_WINDOW: [f64; 3] = [1.0, -2.0, 1.0];

const BANDWIDTH: usize = 2;

/// Per-frame means in `[statics | deltas | accels]` layout with a global
/// diagonal variance per column.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpgProblem {
    pub means: Vec<[f64; FULL_DIMS]>,
    pub variances: [f64; FULL_DIMS],
}

impl MlpgProblem {
    pub fn new(means: Vec<[f64; FULL_DIMS]>, variances: [f64; FULL_DIMS]) -> Result<Self> {
        let p = MlpgProblem { means, variances };
        p.validate()?;
        Ok(p)
    }

    /// Unit variances.
    pub fn with_unit_variances(means: Vec<[f64; FULL_DIMS]>) -> Result<Self> {
        Self::new(means, [1.0; FULL_DIMS])
    }

    fn validate(&self) -> Result<()> {
        if self.means.is_empty() {
            return Err(Error::invalid("mlpg problem has no frames"));
        }
        if let Some(i) = self
            .variances
            .iter()
            .position(|v| !(*v > 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "variance {i} is {} (must be positive)",
                self.variances[i]
            )));
        }
        if self.means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mlpg means contain non-finite values"));
        }
        Ok(())
    }
}

/// Clamped frame index for window taps.
#[inline]
fn tap(t: usize, offset: isize, len: usize) -> usize {
    (t as isize + offset).clamp(0, len as isize - 1) as usize
}

/// Appends delta and delta-delta columns computed with the fixed windows.
pub fn append_deltas(statics: &[[f64; STATIC_DIMS]]) -> Vec<[f64; FULL_DIMS]> {
    let n = statics.len();
    (0..n)
        .map(|t| {
            let mut row = [0.0; FULL_DIMS];
            row[..STATIC_DIMS].copy_from_slice(&statics[t]);
            for d in 0..STATIC_DIMS {
                let mut delta = 0.0;
                let mut accel = 0.0;
                for (i, off) in (-1isize..=1).enumerate() {
                    let x = statics[tap(t, off, n)][d];
                    delta += DELTA_WINDOW[i] * x;
                    accel += ACCEL_WINDOW[i] * x;
                }
                row[STATIC_DIMS + d] = delta;
                row[2 * STATIC_DIMS + d] = accel;
            }
            row
        })
        .collect()
}

/// Symmetric band matrix storing `band[i][j] = A[i][i + j]` for `j <= BANDWIDTH`.
struct SymBand {
    band: Vec<[f64; BANDWIDTH + 1]>,
}

impl SymBand {
    fn zeros(n: usize) -> Self {
        SymBand {
            band: vec![[0.0; BANDWIDTH + 1]; n],
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        self.band[lo][hi - lo] += v;
    }

    /// In-place `L L'` factorization; afterwards `band[i][j]` holds `L[i + j][i]`.
    fn cholesky(&mut self) -> Result<()> {
        let n = self.band.len();
        for i in 0..n {
            let mut d = self.band[i][0];
            for k in i.saturating_sub(BANDWIDTH)..i {
                let l = self.band[k][i - k];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d });
            }
            let d = d.sqrt();
            self.band[i][0] = d;
            for j in i + 1..(i + BANDWIDTH + 1).min(n) {
                let mut s = self.band[i][j - i];
                for k in j.saturating_sub(BANDWIDTH)..i {
                    s -= self.band[k][i - k] * self.band[k][j - k];
                }
                self.band[i][j - i] = s / d;
            }
        }
        Ok(())
    }

    fn solve_factored(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(BANDWIDTH)..i {
                s -= self.band[k][i - k] * b[k];
            }
            b[i] = s / self.band[i][0];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..(i + BANDWIDTH + 1).min(n) {
                s -= self.band[i][j - i] * b[j];
            }
            b[i] = s / self.band[i][0];
        }
    }
}

fn solve_dimension(p: &MlpgProblem, d: usize) -> Result<Vec<f64>> {
    let n = p.means.len();
    let mut a = SymBand::zeros(n);
    let mut rhs = vec![0.0; n];
    let windows: [(usize, [f64; 3]); 3] = [
        (0, [0.0, 1.0, 0.0]),
        (STATIC_DIMS, DELTA_WINDOW),
        (2 * STATIC_DIMS, ACCEL_WINDOW),
    ];
    for (block, win) in windows {
        let col = block + d;
        let prec = 1.0 / p.variances[col];
        for t in 0..n {
            // one row of W: merge taps that land on the same clamped frame
            let mut taps: [(usize, f64); 3] = [(0, 0.0); 3];
            let mut count = 0;
            for (i, off) in (-1isize..=1).enumerate() {
                if win[i] == 0.0 {
                    continue;
                }
                let f = tap(t, off, n);
                if let Some(e) = taps[..count].iter_mut().find(|e| e.0 == f) {
                    e.1 += win[i];
                } else {
                    taps[count] = (f, win[i]);
                    count += 1;
                }
            }
            let mean = p.means[t][col];
            for &(fi, wi) in &taps[..count] {
                rhs[fi] += prec * wi * mean;
                for &(fj, wj) in &taps[..count] {
                    // upper triangle only; the band is symmetric
                    if fi <= fj {
                        a.add(fi, fj, prec * wi * wj);
                    }
                }
            }
        }
    }
    a.cholesky()?;
    a.solve_factored(&mut rhs);
    Ok(rhs)
}

fn collect(columns: Vec<Vec<f64>>, n: usize) -> Vec<[f64; STATIC_DIMS]> {
    let mut out = vec![[0.0; STATIC_DIMS]; n];
    for (d, col) in columns.into_iter().enumerate() {
        for (t, v) in col.into_iter().enumerate() {
            out[t][d] = v;
        }
    }
    out
}

/// Maximum-likelihood static trajectory via banded Cholesky.
///
/// The 20 per-dimension solves run in parallel; each is independent so the
/// result does not depend on the thread count.
pub fn mlpg_solve(p: &MlpgProblem) -> Result<Vec<[f64; STATIC_DIMS]>> {
    p.validate()?;
    let columns = (0..STATIC_DIMS)
        .into_par_iter()
        .map(|d| solve_dimension(p, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(collect(columns, p.means.len()))
}

/// Dense `3T x T` window matrix for one dimension, rows ordered
/// `[statics; deltas; accels]`.
pub fn dense_window_matrix(t_len: usize) -> Vec<Vec<f64>> {
    let mut w = vec![vec![0.0; t_len]; 3 * t_len];
    for t in 0..t_len {
        w[t][t] = 1.0;
        for (i, off) in (-1isize..=1).enumerate() {
            let f = tap(t, off, t_len);
            w[t_len + t][f] += DELTA_WINDOW[i];
            w[2 * t_len + t][f] += ACCEL_WINDOW[i];
        }
    }
    w
}

/// Reference solver: explicit dense `W`, dense normal equations, Gaussian
/// elimination with partial pivoting.
pub fn mlpg_dense_oracle(p: &MlpgProblem) -> Result<Vec<[f64; STATIC_DIMS]>> {
    p.validate()?;
    let n = p.means.len();
    let w = dense_window_matrix(n);
    let mut columns = Vec::with_capacity(STATIC_DIMS);
    for d in 0..STATIC_DIMS {
        let prec: Vec<f64> = (0..3 * n)
            .map(|row| 1.0 / p.variances[(row / n) * STATIC_DIMS + d])
            .collect();
        let mu: Vec<f64> = (0..3 * n)
            .map(|row| p.means[row % n][(row / n) * STATIC_DIMS + d])
            .collect();
        let mut a = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..3 * n).map(|r| w[r][i] * prec[r] * w[r][j]).sum();
            }
            a[i][n] = (0..3 * n).map(|r| w[r][i] * prec[r] * mu[r]).sum();
        }
        columns.push(gauss_solve(a)?);
    }
    Ok(collect(columns, n))
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty");
        if a[piv][col] == 0.0 {
            return Err(Error::NotPositiveDefinite {
                row: col,
                pivot: 0.0,
            });
        }
        a.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = a[i][n];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Ok(x)
}

/// Max-norm of the likelihood gradient `W' S^-1 (W c - mu)` over all dimensions.
pub fn optimality_residual(p: &MlpgProblem, c: &[[f64; STATIC_DIMS]]) -> f64 {
    let n = p.means.len();
    let w = dense_window_matrix(n);
    let mut worst: f64 = 0.0;
    for d in 0..STATIC_DIMS {
        let resid: Vec<f64> = (0..3 * n)
            .map(|r| {
                let wc: f64 = (0..n).map(|j| w[r][j] * c[j][d]).sum();
                let col = (r / n) * STATIC_DIMS + d;
                (wc - p.means[r % n][col]) / p.variances[col]
            })
            .collect();
        for j in 0..n {
            let g: f64 = (0..3 * n).map(|r| w[r][j] * resid[r]).sum();
            worst = worst.max(g.abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, t: usize) -> MlpgProblem {
        let means = (0..t)
            .map(|_| {
                let mut r = [0.0; FULL_DIMS];
                r.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
                r
            })
            .collect();
        let mut var = [0.0; FULL_DIMS];
        var.iter_mut().for_each(|v| *v = rng.gen_range(0.1..3.0));
        MlpgProblem::new(means, var).unwrap()
    }

    fn max_abs_diff(a: &[[f64; STATIC_DIMS]], b: &[[f64; STATIC_DIMS]]) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_track_has_zero_deltas() {
        let out = append_deltas(&vec![[3.0; STATIC_DIMS]; 7]);
        for row in &out {
            assert!(row[STATIC_DIMS..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ramp_deltas() {
        let statics: Vec<[f64; STATIC_DIMS]> = (0..6).map(|t| [t as f64; STATIC_DIMS]).collect();
        let out = append_deltas(&statics);
        for row in &out[1..5] {
            assert_eq!(row[STATIC_DIMS], 1.0);
            assert_eq!(row[2 * STATIC_DIMS], 0.0);
        }
        // replicated edges
        assert_eq!(out[0][STATIC_DIMS], 0.5);
        assert_eq!(out[0][2 * STATIC_DIMS], 1.0);
    }

    #[test]
    fn deltas_match_convolution_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let statics: Vec<[f64; STATIC_DIMS]> = (0..5)
            .map(|_| {
                let mut r = [0.0; STATIC_DIMS];
                r.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                r
            })
            .collect();
        let out = append_deltas(&statics);
        let n = statics.len() as isize;
        let x = |t: isize, d: usize| statics[t.clamp(0, n - 1) as usize][d];
        for t in 0..n {
            for d in 0..STATIC_DIMS {
                let delta = 0.5 * x(t + 1, d) - 0.5 * x(t - 1, d);
                let accel = x(t - 1, d) - 2.0 * x(t, d) + x(t + 1, d);
                let row = &out[t as usize];
                assert!((row[STATIC_DIMS + d] - delta).abs() < 1e-12);
                assert!((row[2 * STATIC_DIMS + d] - accel).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn huge_delta_variance_returns_static_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = random_problem(&mut rng, 12);
        p.variances = [1.0; FULL_DIMS];
        p.variances[STATIC_DIMS..]
            .iter_mut()
            .for_each(|v| *v = 1e12);
        let c = mlpg_solve(&p).unwrap();
        for t in 0..12 {
            for d in 0..STATIC_DIMS {
                assert!((c[t][d] - p.means[t][d]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn consistent_means_recover_track() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let track: Vec<[f64; STATIC_DIMS]> = (0..30)
            .map(|_| {
                let mut r = [0.0; STATIC_DIMS];
                r.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                r
            })
            .collect();
        let p = MlpgProblem::with_unit_variances(append_deltas(&track)).unwrap();
        assert!(max_abs_diff(&mlpg_solve(&p).unwrap(), &track) < 1e-8);
    }

    #[test]
    fn banded_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &t in &[1, 2, 3, 8, 50] {
            for _ in 0..5 {
                let p = random_problem(&mut rng, t);
                let banded = mlpg_solve(&p).unwrap();
                let dense = mlpg_dense_oracle(&p).unwrap();
                assert!(max_abs_diff(&banded, &dense) < 1e-8, "T={t}");
                assert!(optimality_residual(&p, &banded) < 1e-6);
            }
        }
    }

    #[test]
    fn single_frame_is_static_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_problem(&mut rng, 1);
        let c = mlpg_dense_oracle(&p).unwrap();
        let b = mlpg_solve(&p).unwrap();
        for d in 0..STATIC_DIMS {
            assert!((c[0][d] - p.means[0][d]).abs() < 1e-12);
            assert!((b[0][d] - p.means[0][d]).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_problem(&mut rng, 10);
        let mut q = p.clone();
        q.variances.iter_mut().for_each(|v| *v *= 37.5);
        assert!(max_abs_diff(&mlpg_solve(&p).unwrap(), &mlpg_solve(&q).unwrap()) < 1e-9);
        assert!(
            max_abs_diff(
                &mlpg_dense_oracle(&p).unwrap(),
                &mlpg_dense_oracle(&q).unwrap()
            ) < 1e-9
        );
    }

    #[test]
    fn rejects_bad_variance() {
        let mut v = [1.0; FULL_DIMS];
        v[7] = 0.0;
        assert!(matches!(
            MlpgProblem::new(vec![[0.0; FULL_DIMS]], v),
            Err(Error::InvalidArgument(_))
        ));
        let p = MlpgProblem {
            means: vec![[0.0; FULL_DIMS]],
            variances: [-1.0; FULL_DIMS],
        };
        assert!(mlpg_solve(&p).is_err());
        assert!(mlpg_dense_oracle(&p).is_err());
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_problem(&mut rng, 40);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| mlpg_solve(&p).unwrap());
        let b = four.install(|| mlpg_solve(&p).unwrap());
        assert_eq!(a, b);
    }
}
