use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use crate::acoustic::{forward_trace, tap_range, ForwardTrace, SynthesizerWeights};
use crate::error::{Error, Result};
use crate::prosody::FrameInput;

use super::mse_loss;

/// Loss and exact gradient of `mse_loss(predict_acoustics(frames), targets)`.
///
/// The returned weights hold gradients; their `mlpg_variances` field is zero.
pub fn backward(
    frames: &[FrameInput],
    targets: &Array2<f64>,
    w: &SynthesizerWeights,
) -> Result<(f64, SynthesizerWeights)> {
    let tr = forward_trace(frames, w)?;
    let loss = mse_loss(&tr.output, targets)?;
    let mut g = SynthesizerWeights::zeros(&w.config());
    g.mlpg_variances.fill(0.0);

    let scale = 2.0 / tr.output.len() as f64;
    let d_out = (&tr.output - targets) * scale;

    // head and fully connected layers
    g.head_w = d_out.t().dot(&tr.fc[2]);
    g.head_b = d_out.sum_axis(Axis(0));
    let mut d = d_out.dot(&w.head_w);
    for l in (0..3).rev() {
        let act = &tr.fc[l];
        d.zip_mut_with(act, |dv, &a| {
            if a <= 0.0 {
                *dv = 0.0;
            }
        });
        let input = if l == 0 {
            &tr.lstm.hidden
        } else {
            &tr.fc[l - 1]
        };
        g.fc_w[l] = d.t().dot(input);
        g.fc_b[l] = d.sum_axis(Axis(0));
        d = d.dot(&w.fc_w[l]);
    }

    let d_pre = lstm_backward(&tr, w, &d);
    g.lstm_w_ih = d_pre.t().dot(&tr.lstm_in);
    let t_len = tr.output.nrows();
    if t_len > 1 {
        g.lstm_w_hh = d_pre
            .slice(s![1.., ..])
            .t()
            .dot(&tr.lstm.hidden.slice(s![..t_len - 1, ..]));
    }
    g.lstm_b = d_pre.sum_axis(Axis(0));
    let d_in = d_pre.dot(&w.lstm_w_ih);
    let cp = tr.phonetic.ncols();

    let d_phon = d_in.slice(s![.., ..cp]);
    let (gw, gb, d_emb) =
        conv_backward(tr.embedded.view(), &tr.phonetic, d_phon, &w.phonetic_conv_w);
    g.phonetic_conv_w = gw;
    g.phonetic_conv_b = gb;
    let d_pitch = d_in.slice(s![.., cp..]);
    let (gw, gb, _) = conv_backward(tr.pitch.view(), &tr.pitch_ctx, d_pitch, &w.pitch_conv_w);
    g.pitch_conv_w = gw;
    g.pitch_conv_b = gb;

    for (t, &id) in tr.labels.iter().enumerate() {
        let mut row = g.embedding.row_mut(id);
        row += &d_emb.row(t);
    }
    if !loss.is_finite() {
        return Err(Error::invalid("loss is not finite"));
    }
    Ok((loss, g))
}

/// Backpropagation through time; returns gradients of the gate pre-activations.
fn lstm_backward(tr: &ForwardTrace, w: &SynthesizerWeights, d_hidden: &Array2<f64>) -> Array2<f64> {
    let lstm = &tr.lstm;
    let (t_len, h) = lstm.hidden.dim();
    let mut d_pre = Array2::zeros((t_len, 4 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    for t in (0..t_len).rev() {
        let gates = lstm.gates.row(t);
        let mut row = d_pre.row_mut(t);
        for j in 0..h {
            let (i, f, gc, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let c = lstm.cells[[t, j]];
            let c_prev = if t > 0 { lstm.cells[[t - 1, j]] } else { 0.0 };
            let tc = c.tanh();
            let dh = d_hidden[[t, j]] + dh_next[j];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            row[j] = dc * gc * i * (1.0 - i);
            row[h + j] = dc * c_prev * f * (1.0 - f);
            row[2 * h + j] = dc * i * (1.0 - gc * gc);
            row[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        dh_next = w.lstm_w_hh.t().dot(&d_pre.row(t));
    }
    d_pre
}

/// Gradients of a tanh convolution: weight, bias, and input.
fn conv_backward(
    x: ArrayView2<f64>,
    y: &Array2<f64>,
    d_y: ArrayView2<f64>,
    w: &Array3<f64>,
) -> (Array3<f64>, Array1<f64>, Array2<f64>) {
    let mut d_a = d_y.to_owned();
    d_a.zip_mut_with(y, |d, &v| *d *= 1.0 - v * v);
    let (c_out, c_in, kernel) = w.dim();
    let t_len = x.nrows();
    let half = kernel / 2;
    let mut gw = Array3::zeros((c_out, c_in, kernel));
    let mut dx = Array2::zeros((t_len, c_in));
    for k in 0..kernel {
        if let Some((t0, t1, off)) = tap_range(t_len, k, half) {
            let (s0, s1) = ((t0 as isize + off) as usize, (t1 as isize + off) as usize);
            let da = d_a.slice(s![t0..t1, ..]);
            gw.slice_mut(s![.., .., k])
                .assign(&da.t().dot(&x.slice(s![s0..s1, ..])));
            let mut dst = dx.slice_mut(s![s0..s1, ..]);
            dst += &da.dot(&w.slice(s![.., .., k]));
        }
    }
    (gw, d_a.sum_axis(Axis(0)), dx)
}

/// Relative error per parameter group between analytic and central-difference gradients.
///
/// The error of a group is `|g - g_fd| / max(|g|, |g_fd|, 1e-12)` in the Euclidean norm.
pub fn gradient_check(
    frames: &[FrameInput],
    targets: &Array2<f64>,
    w: &SynthesizerWeights,
    step: f64,
) -> Result<Vec<(&'static str, f64)>> {
    let (_, analytic) = backward(frames, targets, w)?;
    let loss_at = |p: &SynthesizerWeights| -> Result<f64> {
        let out = crate::acoustic::predict_acoustics(frames, p)?;
        mse_loss(&out.means, targets)
    };
    let mut probe = w.clone();
    let mut out = Vec::new();
    let group_count = w.tensors().len();
    for gi in 0..group_count {
        let len = w.tensors()[gi].1.len();
        let mut numeric = Vec::with_capacity(len);
        for idx in 0..len {
            let orig = nth_mut(&mut probe, gi, idx, None);
            nth_mut(&mut probe, gi, idx, Some(orig + step));
            let plus = loss_at(&probe)?;
            nth_mut(&mut probe, gi, idx, Some(orig - step));
            let minus = loss_at(&probe)?;
            nth_mut(&mut probe, gi, idx, Some(orig));
            numeric.push((plus - minus) / (2.0 * step));
        }
        let (name, a) = &analytic.tensors()[gi];
        let diff: f64 = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push((*name, diff / na.max(nn).max(1e-12)));
    }
    Ok(out)
}

/// Reads, and optionally overwrites, element `idx` of tensor group `group`.
fn nth_mut(w: &mut SynthesizerWeights, group: usize, idx: usize, set: Option<f64>) -> f64 {
    let mut tensors = w.tensors_mut();
    let v = tensors[group]
        .1
        .iter_mut()
        .nth(idx)
        .expect("index in range");
    let old = *v;
    if let Some(x) = set {
        *v = x;
    }
    old
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::{predict_acoustics, SynthesizerConfig};
    use crate::mlpg::FULL_DIMS;
    use crate::prosody::Position;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_problem(
        seed: u64,
        t_len: usize,
    ) -> (Vec<FrameInput>, Array2<f64>, SynthesizerWeights) {
        let cfg = SynthesizerConfig::toy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = SynthesizerWeights::random(&cfg, seed);
        for (_, mut t) in w.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        }
        let frames = (0..t_len)
            .map(|_| FrameInput {
                label_id: rng.gen_range(0..cfg.vocab as u32),
                position: Position::Middle,
                pitch: rng.gen_range(0.0..1.0),
            })
            .collect();
        let targets = Array2::from_shape_fn((t_len, FULL_DIMS), |_| rng.gen_range(-1.0..1.0));
        (frames, targets, w)
    }

    #[test]
    fn matches_finite_differences() {
        for seed in [1, 2] {
            let (f, tgt, w) = toy_problem(seed, 6);
            for (name, err) in gradient_check(&f, &tgt, &w, 1e-4).unwrap() {
                assert!(err < 1e-4, "{name}: {err}");
            }
        }
    }

    #[test]
    fn single_frame_gradients() {
        let (f, tgt, w) = toy_problem(3, 1);
        for (name, err) in gradient_check(&f, &tgt, &w, 1e-4).unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let (f, _, w) = toy_problem(4, 6);
        let target = predict_acoustics(&f, &w).unwrap().means;
        let (loss, g) = backward(&f, &target, &w).unwrap();
        assert_eq!(loss, 0.0);
        for (_, t) in g.tensors() {
            assert!(t.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn gradient_is_first_order_in_target_perturbation() {
        let (f, dir, w) = toy_problem(5, 6);
        let base = predict_acoustics(&f, &w).unwrap().means;
        let delta = 1e-6;
        let (_, g1) = backward(&f, &(&base + &(&dir * delta)), &w).unwrap();
        let (_, g2) = backward(&f, &(&base + &(&dir * (2.0 * delta))), &w).unwrap();
        for ((name, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (2.0 * x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(diff <= 1e-6 * na.max(1e-30), "{name}");
        }
    }
}
