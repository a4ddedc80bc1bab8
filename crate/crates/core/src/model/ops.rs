//! Row-wise kernels shared by the forward and backward passes.

use crate::scalar::Scalar;

/// Layer norm over rows of width `d`. Writes the normalized input, the
/// reciprocal standard deviation per row and the affine output.
pub(crate) fn layernorm<F: Scalar>(x: &[F], gain: &[F], bias: &[F], eps: F, d: usize, xhat: &mut [F], rstd: &mut [F], y: &mut [F]) {
    let inv_d = F::one() / F::of(d as f64);
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().fold(F::zero(), |s, &v| s + v) * inv_d;
        let var = row.iter().fold(F::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_d;
        let rs = F::one() / (var + eps).sqrt();
        rstd[r] = rs;
        let base = r * d;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[base + j] = h;
            y[base + j] = h * gain[j] + bias[j];
        }
    }
}

/// Backward of [`layernorm`]; accumulates into `dx`, `dgain`, `dbias`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layernorm_backward<F: Scalar>(
    dy: &[F],
    xhat: &[F],
    rstd: &[F],
    gain: &[F],
    d: usize,
    dx: &mut [F],
    dgain: &mut [F],
    dbias: &mut [F],
) {
    let inv_d = F::one() / F::of(d as f64);
    for (r, (dyr, hr)) in dy.chunks_exact(d).zip(xhat.chunks_exact(d)).enumerate() {
        let mut mean_g = F::zero();
        let mut mean_gh = F::zero();
        for j in 0..d {
            let g = dyr[j] * gain[j];
            mean_g = mean_g + g;
            mean_gh = mean_gh + g * hr[j];
            dgain[j] = dgain[j] + dyr[j] * hr[j];
            dbias[j] = dbias[j] + dyr[j];
        }
        mean_g = mean_g * inv_d;
        mean_gh = mean_gh * inv_d;
        let base = r * d;
        for j in 0..d {
            let g = dyr[j] * gain[j];
            dx[base + j] = dx[base + j] + rstd[r] * (g - mean_g - hr[j] * mean_gh);
        }
    }
}

/// Causal softmax of each row of a `t x t` score block in place. Entries
/// above the diagonal become exactly zero.
pub(crate) fn causal_softmax_rows<F: Scalar>(scores: &[F], weights: &mut [F], t: usize) {
    for i in 0..t {
        let row = &scores[i * t..i * t + i + 1];
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let mut sum = F::zero();
        for j in 0..=i {
            let e = (row[j] - max).exp();
            weights[i * t + j] = e;
            sum = sum + e;
        }
        for j in 0..=i {
            weights[i * t + j] = weights[i * t + j] / sum;
        }
        for j in i + 1..t {
            weights[i * t + j] = F::zero();
        }
    }
}
