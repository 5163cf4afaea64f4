//! Branch-free f32 activations for the sample loop.

/// Rational tanh approximation, absolute error below 1e-4, saturating at ±1.
#[inline(always)]
pub fn tanh(x: f32) -> f32 {
    const N0: f32 = 952.528;
    const N1: f32 = 96.39999;
    const N2: f32 = 0.608;
    const D0: f32 = 952.724;
    const D1: f32 = 413.368;
    const D2: f32 = 11.886;
    let x = x.clamp(-8.0, 8.0);
    let x2 = x * x;
    let num = (N2 * x2 + N1) * x2 + N0;
    let den = (D2 * x2 + D1) * x2 + D0;
    (num * x / den).clamp(-1.0, 1.0)
}

#[inline(always)]
pub fn sigmoid(x: f32) -> f32 {
    0.5 + 0.5 * tanh(0.5 * x)
}

/// `e^x` via a split exponent and a cubic for the fraction; exactly zero
/// below `-87`.
#[inline(always)]
pub fn exp(x: f32) -> f32 {
    let y = (x * std::f32::consts::LOG2_E).clamp(-126.0, 126.0);
    let i = y.floor();
    let f = y - i;
    let p = 1.0 + f * (0.695_976_1 + f * (0.224_940_4 + f * 0.079_083_5));
    let scale = f32::from_bits(((i as i32 + 127) as u32) << 23);
    if x < -87.0 {
        0.0
    } else {
        p * scale
    }
}

/// Dot product with 8 independent accumulators, summed in a fixed order.
#[inline(always)]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0f32;
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
