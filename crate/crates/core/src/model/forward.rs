use alloc::vec;
use alloc::vec::Vec;

use super::ops::{causal_softmax_rows, layernorm};
use super::ModelParams;
use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, Trans};
use crate::taskgen::{SymbolicExample, TokenId};

/// Activations of one MLP branch, `[batch * seq_len, width]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace<F> {
    pub resid_in: Vec<F>,
    pub ln_xhat: Vec<F>,
    pub ln_rstd: Vec<F>,
    pub normed: Vec<F>,
    pub pre_act: Vec<F>,
    pub out: Vec<F>,
}

/// Activations of one layer. Per-position tensors are
/// `[batch * seq_len, d_model]`; attention tensors are
/// `[batch, seq_len (query), seq_len (key)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<F> {
    pub resid_in: Vec<F>,
    pub ln_xhat: Vec<F>,
    pub ln_rstd: Vec<F>,
    pub normed: Vec<F>,
    pub query: Vec<F>,
    pub key: Vec<F>,
    pub value: Vec<F>,
    /// Scaled pre-softmax scores; entries above the diagonal are `-inf`.
    pub attn_logits: Vec<F>,
    pub attn_weights: Vec<F>,
    /// Attention-weighted value states, before the output projection.
    pub head_out: Vec<F>,
    /// `head_out · O`, the branch added to the residual stream.
    pub attn_out: Vec<F>,
    pub mlp: Option<MlpTrace<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<F> {
    /// Input tokens, `[batch * seq_len]`.
    pub tokens: Vec<TokenId>,
    pub batch: usize,
    pub seq_len: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub layers: Vec<LayerTrace<F>>,
    pub final_resid: Vec<F>,
    pub final_xhat: Vec<F>,
    pub final_rstd: Vec<F>,
    pub final_normed: Vec<F>,
    /// `[batch * seq_len, vocab_size]`
    pub logits: Vec<F>,
}

impl<F: Scalar> ForwardTrace<F> {
    pub fn logits_at(&self, b: usize, pos: usize) -> &[F] {
        let v = self.vocab_size;
        let r = b * self.seq_len + pos;
        &self.logits[r * v..(r + 1) * v]
    }

    /// Attention weights of query position `q` in example `b` at `layer`.
    pub fn weights_row(&self, layer: usize, b: usize, q: usize) -> &[F] {
        let t = self.seq_len;
        let off = (b * t + q) * t;
        &self.layers[layer].attn_weights[off..off + t]
    }

    pub fn logits_row(&self, layer: usize, b: usize, q: usize) -> &[F] {
        let t = self.seq_len;
        let off = (b * t + q) * t;
        &self.layers[layer].attn_logits[off..off + t]
    }

    /// Value state of position `pos` in example `b` at `layer`.
    pub fn value_at(&self, layer: usize, b: usize, pos: usize) -> &[F] {
        let d = self.d_model;
        let r = b * self.seq_len + pos;
        &self.layers[layer].value[r * d..(r + 1) * d]
    }
}

/// Where the loss is read and what it should predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryTarget {
    pub pos: usize,
    pub label: TokenId,
}

impl From<&SymbolicExample> for QueryTarget {
    fn from(ex: &SymbolicExample) -> Self {
        QueryTarget {
            pos: ex.query_pos,
            label: ex.label,
        }
    }
}

/// Runs the model over a batch of equal-length token sequences and keeps
/// every intermediate activation.
pub fn forward<F: Scalar, T: AsRef<[TokenId]>>(params: &ModelParams<F>, batch: &[T]) -> Result<ForwardTrace<F>> {
    let cfg = &params.config;
    let (t, d, v) = (cfg.seq_len, cfg.d_model, cfg.vocab_size);
    let bsz = batch.len();
    let rows = bsz * t;
    let eps = F::of(cfg.layernorm_epsilon);
    let scale = F::one() / F::of(d as f64).sqrt();

    let mut x = vec![F::zero(); rows * d];
    let mut tokens = Vec::with_capacity(rows);
    for (b, seq) in batch.iter().enumerate() {
        let seq = seq.as_ref();
        if seq.len() != t {
            return Err(Error::Shape {
                context: "sequence length",
                expected: t,
                actual: seq.len(),
            });
        }
        for (p, &tok) in seq.iter().enumerate() {
            if tok as usize >= v {
                return Err(Error::Token { token: tok, vocab: v });
            }
            tokens.push(tok);
            let dst = &mut x[(b * t + p) * d..(b * t + p + 1) * d];
            let te = params.token_embedding.row(tok as usize);
            let pe = params.positional_embedding.row(p);
            for j in 0..d {
                dst[j] = te[j] + pe[j];
            }
        }
    }

    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let resid_in = x.clone();
        let mut ln_xhat = vec![F::zero(); rows * d];
        let mut ln_rstd = vec![F::zero(); rows];
        let mut normed = vec![F::zero(); rows * d];
        layernorm(&x, &lp.ln_gain.data, &lp.ln_bias.data, eps, d, &mut ln_xhat, &mut ln_rstd, &mut normed);

        let project = |w: &[F]| {
            let mut out = vec![F::zero(); rows * d];
            gemm(Trans::No, Trans::No, rows, d, d, F::one(), &normed, w, F::zero(), &mut out);
            out
        };
        let query = project(&lp.query.data);
        let key = project(&lp.key.data);
        let value = project(&lp.value.data);

        let mut attn_logits = vec![F::zero(); bsz * t * t];
        let mut attn_weights = vec![F::zero(); bsz * t * t];
        let mut head_out = vec![F::zero(); rows * d];
        for b in 0..bsz {
            let (rs, re) = (b * t * d, (b + 1) * t * d);
            let (ss, se) = (b * t * t, (b + 1) * t * t);
            let scores = &mut attn_logits[ss..se];
            gemm(Trans::No, Trans::Yes, t, d, t, scale, &query[rs..re], &key[rs..re], F::zero(), scores);
            for i in 0..t {
                for j in i + 1..t {
                    scores[i * t + j] = F::neg_infinity();
                }
            }
            causal_softmax_rows(scores, &mut attn_weights[ss..se], t);
            gemm(Trans::No, Trans::No, t, t, d, F::one(), &attn_weights[ss..se], &value[rs..re], F::zero(), &mut head_out[rs..re]);
        }
        let mut attn_out = vec![F::zero(); rows * d];
        gemm(Trans::No, Trans::No, rows, d, d, F::one(), &head_out, &lp.output.data, F::zero(), &mut attn_out);
        for (xi, &a) in x.iter_mut().zip(&attn_out) {
            *xi = *xi + a;
        }

        let mlp = lp.mlp.as_ref().map(|mp| {
            let h = mp.up.cols();
            let resid_in = x.clone();
            let mut ln_xhat = vec![F::zero(); rows * d];
            let mut ln_rstd = vec![F::zero(); rows];
            let mut normed = vec![F::zero(); rows * d];
            layernorm(&x, &mp.ln_gain.data, &mp.ln_bias.data, eps, d, &mut ln_xhat, &mut ln_rstd, &mut normed);
            let mut pre_act = vec![F::zero(); rows * h];
            gemm(Trans::No, Trans::No, rows, d, h, F::one(), &normed, &mp.up.data, F::zero(), &mut pre_act);
            let act: Vec<F> = pre_act.iter().map(|&z| z.max(F::zero())).collect();
            let mut out = vec![F::zero(); rows * d];
            gemm(Trans::No, Trans::No, rows, h, d, F::one(), &act, &mp.down.data, F::zero(), &mut out);
            for (xi, &o) in x.iter_mut().zip(&out) {
                *xi = *xi + o;
            }
            MlpTrace {
                resid_in,
                ln_xhat,
                ln_rstd,
                normed,
                pre_act,
                out,
            }
        });

        layers.push(LayerTrace {
            resid_in,
            ln_xhat,
            ln_rstd,
            normed,
            query,
            key,
            value,
            attn_logits,
            attn_weights,
            head_out,
            attn_out,
            mlp,
        });
    }

    let mut final_xhat = vec![F::zero(); rows * d];
    let mut final_rstd = vec![F::zero(); rows];
    let mut final_normed = vec![F::zero(); rows * d];
    layernorm(
        &x,
        &params.final_ln_gain.data,
        &params.final_ln_bias.data,
        eps,
        d,
        &mut final_xhat,
        &mut final_rstd,
        &mut final_normed,
    );
    let mut logits = vec![F::zero(); rows * v];
    gemm(Trans::No, Trans::No, rows, d, v, F::one(), &final_normed, &params.readout.data, F::zero(), &mut logits);

    Ok(ForwardTrace {
        tokens,
        batch: bsz,
        seq_len: t,
        d_model: d,
        vocab_size: v,
        layers,
        final_resid: x,
        final_xhat,
        final_rstd,
        final_normed,
        logits,
    })
}

/// Numerically stable softmax, evaluated in `f64`.
pub fn softmax_f64<F: Scalar>(logits: &[F]) -> Vec<f64> {
    let max = logits.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| libm::exp(x.f64() - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax of the query-position logits of example `b`.
pub fn predict_probs<F: Scalar>(trace: &ForwardTrace<F>, b: usize, query_pos: usize) -> Vec<f64> {
    softmax_f64(trace.logits_at(b, query_pos))
}

/// Mean cross entropy of the label at each example's query position. No
/// other position contributes.
pub fn loss_at_query<F: Scalar>(trace: &ForwardTrace<F>, targets: &[QueryTarget]) -> f64 {
    assert_eq!(targets.len(), trace.batch, "one target per example");
    let total: f64 = targets
        .iter()
        .enumerate()
        .map(|(b, tg)| {
            let logits = trace.logits_at(b, tg.pos);
            let max = logits.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(logits.iter().map(|x| libm::exp(x.f64() - max)).sum::<f64>());
            lse - logits[tg.label as usize].f64()
        })
        .sum();
    total / targets.len() as f64
}
