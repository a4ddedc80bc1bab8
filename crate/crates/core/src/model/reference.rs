//! A straight-line forward pass: one sequence, plain loops, no shared
//! kernels. Slow, and only meant to cross-check [`forward`](super::forward).

use alloc::vec;
use alloc::vec::Vec;

use super::ModelParams;
use crate::tensor::Tensor;
use crate::taskgen::TokenId;

fn matvec(x: &[f64], w: &Tensor<f64>) -> Vec<f64> {
    let (rows, cols) = (w.shape[0], w.shape[1]);
    (0..cols).map(|j| (0..rows).map(|i| x[i] * w.data[i * cols + j]).sum()).collect()
}

fn layer_norm(x: &[f64], g: &Tensor<f64>, b: &Tensor<f64>, eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rstd = 1.0 / libm::sqrt(var + eps);
    x.iter().enumerate().map(|(j, v)| (v - mean) * rstd * g.data[j] + b.data[j]).collect()
}

/// Logits at every position of `tokens`.
pub fn reference_logits(p: &ModelParams<f64>, tokens: &[TokenId]) -> Vec<Vec<f64>> {
    let cfg = &p.config;
    let d = cfg.d_model;
    let eps = cfg.layernorm_epsilon;
    let mut x: Vec<Vec<f64>> = tokens
        .iter()
        .enumerate()
        .map(|(pos, &t)| (0..d).map(|j| p.token_embedding.data[t as usize * d + j] + p.positional_embedding.data[pos * d + j]).collect())
        .collect();
    for lp in &p.layers {
        let h: Vec<Vec<f64>> = x.iter().map(|r| layer_norm(r, &lp.ln_gain, &lp.ln_bias, eps)).collect();
        let q: Vec<Vec<f64>> = h.iter().map(|r| matvec(r, &lp.query)).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|r| matvec(r, &lp.key)).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|r| matvec(r, &lp.value)).collect();
        let mut next = x.clone();
        for i in 0..x.len() {
            let scores: Vec<f64> = (0..=i)
                .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / libm::sqrt(d as f64))
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| libm::exp(s - m)).sum();
            let mut mixed = vec![0.0; d];
            for (j, s) in scores.iter().enumerate() {
                let w = libm::exp(s - m) / z;
                for c in 0..d {
                    mixed[c] += w * v[j][c];
                }
            }
            for (c, o) in matvec(&mixed, &lp.output).into_iter().enumerate() {
                next[i][c] += o;
            }
        }
        x = next;
        if let Some(mp) = &lp.mlp {
            for row in x.iter_mut() {
                let h = layer_norm(row, &mp.ln_gain, &mp.ln_bias, eps);
                let act: Vec<f64> = matvec(&h, &mp.up).into_iter().map(|z| z.max(0.0)).collect();
                for (c, o) in matvec(&act, &mp.down).into_iter().enumerate() {
                    row[c] += o;
                }
            }
        }
    }
    x.iter()
        .map(|r| matvec(&layer_norm(r, &p.final_ln_gain, &p.final_ln_bias, eps), &p.readout))
        .collect()
}
