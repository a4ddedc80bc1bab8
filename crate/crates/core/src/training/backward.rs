//! Reverse-mode gradients of the query-position cross entropy.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::ops::layernorm_backward;
use crate::model::{ForwardTrace, ModelParams, QueryTarget};
use crate::scalar::{gemm, Scalar, Trans};

/// Deliberate gradient corruption, used to show that the gradient check
/// catches a broken branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate the value-projection weight gradient of `layer`.
    NegateValue { layer: usize },
}

/// Gradient of `loss_at_query` with respect to every parameter.
pub fn backward<F: Scalar>(params: &ModelParams<F>, trace: &ForwardTrace<F>, targets: &[QueryTarget]) -> ModelParams<F> {
    backward_with_fault(params, trace, targets, None)
}

/// `d loss / d logits` at every position: `(softmax - onehot) / batch` at
/// each query position, zero elsewhere.
pub fn logit_gradient<F: Scalar>(trace: &ForwardTrace<F>, targets: &[QueryTarget]) -> Vec<F> {
    assert_eq!(targets.len(), trace.batch, "one target per example");
    let (t, v) = (trace.seq_len, trace.vocab_size);
    let inv_b = 1.0 / trace.batch as f64;
    let mut dlogits = vec![F::zero(); trace.batch * t * v];
    for (b, tg) in targets.iter().enumerate() {
        let probs = crate::model::predict_probs(trace, b, tg.pos);
        let row = &mut dlogits[(b * t + tg.pos) * v..(b * t + tg.pos + 1) * v];
        for (j, p) in probs.into_iter().enumerate() {
            let onehot = if j == tg.label as usize { 1.0 } else { 0.0 };
            row[j] = F::of((p - onehot) * inv_b);
        }
    }
    dlogits
}

pub fn backward_with_fault<F: Scalar>(
    params: &ModelParams<F>,
    trace: &ForwardTrace<F>,
    targets: &[QueryTarget],
    fault: Option<Fault>,
) -> ModelParams<F> {
    let cfg = &params.config;
    let (t, d, v) = (trace.seq_len, trace.d_model, trace.vocab_size);
    let bsz = trace.batch;
    let rows = bsz * t;
    let scale = F::one() / F::of(d as f64).sqrt();
    let mut grads = ModelParams::<F>::zeros(cfg);

    let dlogits = logit_gradient(trace, targets);
    gemm(Trans::Yes, Trans::No, d, rows, v, F::one(), &trace.final_normed, &dlogits, F::zero(), &mut grads.readout.data);
    let mut dnormed = vec![F::zero(); rows * d];
    gemm(Trans::No, Trans::Yes, rows, v, d, F::one(), &dlogits, &params.readout.data, F::zero(), &mut dnormed);

    // gradient of the loss w.r.t. the residual stream, walked backwards
    let mut dx = vec![F::zero(); rows * d];
    layernorm_backward(
        &dnormed,
        &trace.final_xhat,
        &trace.final_rstd,
        &params.final_ln_gain.data,
        d,
        &mut dx,
        &mut grads.final_ln_gain.data,
        &mut grads.final_ln_bias.data,
    );

    for (l, (lp, lt)) in params.layers.iter().zip(&trace.layers).enumerate().rev() {
        let lg = &mut grads.layers[l];

        if let (Some(mp), Some(mt), Some(mg)) = (&lp.mlp, &lt.mlp, &mut lg.mlp) {
            let h = mp.up.cols();
            let act: Vec<F> = mt.pre_act.iter().map(|&z| z.max(F::zero())).collect();
            gemm(Trans::Yes, Trans::No, h, rows, d, F::one(), &act, &dx, F::zero(), &mut mg.down.data);
            let mut dpre = vec![F::zero(); rows * h];
            gemm(Trans::No, Trans::Yes, rows, d, h, F::one(), &dx, &mp.down.data, F::zero(), &mut dpre);
            for (g, &z) in dpre.iter_mut().zip(&mt.pre_act) {
                if z <= F::zero() {
                    *g = F::zero();
                }
            }
            gemm(Trans::Yes, Trans::No, d, rows, h, F::one(), &mt.normed, &dpre, F::zero(), &mut mg.up.data);
            let mut dn = vec![F::zero(); rows * d];
            gemm(Trans::No, Trans::Yes, rows, h, d, F::one(), &dpre, &mp.up.data, F::zero(), &mut dn);
            layernorm_backward(&dn, &mt.ln_xhat, &mt.ln_rstd, &mp.ln_gain.data, d, &mut dx, &mut mg.ln_gain.data, &mut mg.ln_bias.data);
        }

        gemm(Trans::Yes, Trans::No, d, rows, d, F::one(), &lt.head_out, &dx, F::zero(), &mut lg.output.data);
        let mut dhead = vec![F::zero(); rows * d];
        gemm(Trans::No, Trans::Yes, rows, d, d, F::one(), &dx, &lp.output.data, F::zero(), &mut dhead);

        let mut dq = vec![F::zero(); rows * d];
        let mut dk = vec![F::zero(); rows * d];
        let mut dv = vec![F::zero(); rows * d];
        let mut dw = vec![F::zero(); t * t];
        for b in 0..bsz {
            let (rs, re) = (b * t * d, (b + 1) * t * d);
            let w = &lt.attn_weights[b * t * t..(b + 1) * t * t];
            gemm(Trans::No, Trans::Yes, t, d, t, F::one(), &dhead[rs..re], &lt.value[rs..re], F::zero(), &mut dw);
            gemm(Trans::Yes, Trans::No, t, t, d, F::one(), w, &dhead[rs..re], F::zero(), &mut dv[rs..re]);
            // softmax backward; masked entries have w = 0 and stay 0
            for i in 0..t {
                let row = i * t..i * t + t;
                let dot = w[row.clone()].iter().zip(&dw[row.clone()]).fold(F::zero(), |s, (&a, &g)| s + a * g);
                for j in row {
                    dw[j] = w[j] * (dw[j] - dot);
                }
            }
            gemm(Trans::No, Trans::No, t, t, d, scale, &dw, &lt.key[rs..re], F::zero(), &mut dq[rs..re]);
            gemm(Trans::Yes, Trans::No, t, t, d, scale, &dw, &lt.query[rs..re], F::zero(), &mut dk[rs..re]);
        }
        let mut dn = vec![F::zero(); rows * d];
        for (dproj, w, gw) in [
            (&dq, &lp.query.data, &mut lg.query.data),
            (&dk, &lp.key.data, &mut lg.key.data),
            (&dv, &lp.value.data, &mut lg.value.data),
        ] {
            gemm(Trans::Yes, Trans::No, d, rows, d, F::one(), &lt.normed, dproj, F::zero(), gw);
            gemm(Trans::No, Trans::Yes, rows, d, d, F::one(), dproj, w, F::one(), &mut dn);
        }
        layernorm_backward(&dn, &lt.ln_xhat, &lt.ln_rstd, &lp.ln_gain.data, d, &mut dx, &mut lg.ln_gain.data, &mut lg.ln_bias.data);
        if fault == Some(Fault::NegateValue { layer: l }) {
            lg.value.data.iter_mut().for_each(|g| *g = -*g);
        }
    }

    for (r, &tok) in trace.tokens.iter().enumerate() {
        let g = &dx[r * d..(r + 1) * d];
        let te = grads.token_embedding.row_mut(tok as usize);
        for j in 0..d {
            te[j] = te[j] + g[j];
        }
        let pe = grads.positional_embedding.row_mut(r % t);
        for j in 0..d {
            pe[j] = pe[j] + g[j];
        }
    }
    grads
}
