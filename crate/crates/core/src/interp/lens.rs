//! Logit-lens readings of value states and the attention-weighted value
//! decomposition of the query logits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{softmax_f64, ForwardTrace, ModelParams};
use crate::scalar::Scalar;
use crate::taskgen::{RoleKind, SymbolicExample};

/// `ReadOut(LayerNorm_final(O^(layer) · value^(layer)(pos)))` for example `b`.
pub fn logit_lens_value_at<F: Scalar>(params: &ModelParams<F>, trace: &ForwardTrace<F>, layer: usize, b: usize, pos: usize) -> Vec<f64> {
    let d = trace.d_model;
    let value = trace.value_at(layer, b, pos);
    let out = &params.layers[layer].output;
    let mut o = vec![0.0; d];
    for (i, &vi) in value.iter().enumerate() {
        let row = out.row(i);
        for j in 0..d {
            o[j] += vi.f64() * row[j].f64();
        }
    }
    let mean = o.iter().sum::<f64>() / d as f64;
    let var = o.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
    let rstd = 1.0 / libm::sqrt(var + params.config.layernorm_epsilon);
    let normed: Vec<f64> = (0..d)
        .map(|j| (o[j] - mean) * rstd * params.final_ln_gain.data[j].f64() + params.final_ln_bias.data[j].f64())
        .collect();
    let v = trace.vocab_size;
    let mut logits = vec![0.0; v];
    for (i, &n) in normed.iter().enumerate() {
        let row = params.readout.row(i);
        for j in 0..v {
            logits[j] += n * row[j].f64();
        }
    }
    logits
}

/// Logit lens of the last layer's value state at `pos`.
pub fn logit_lens_value<F: Scalar>(params: &ModelParams<F>, trace: &ForwardTrace<F>, b: usize, pos: usize) -> Vec<f64> {
    logit_lens_value_at(params, trace, trace.layers.len() - 1, b, pos)
}

/// Block means of a [`LogitLensTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensBlocks {
    pub diagonal_mean: f64,
    pub diagonal_abs_mean: f64,
    /// End rows, bridge columns.
    pub end_to_bridge_mean: f64,
    /// End rows, the column of the same chain's bridge.
    pub end_to_own_bridge_mean: f64,
    /// Bridge rows, end columns.
    pub bridge_to_end_mean: f64,
    pub bridge_to_end_abs_mean: f64,
}

/// Batch-mean lens entries among the bridge and end tokens of each
/// context. Rows and columns run `B_1..B_k, E_1..E_k` by chain index;
/// row `r`, column `c` is the lens vector of token `r` read at token `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitLensTable {
    pub labels: Vec<String>,
    pub entries: Vec<f64>,
    pub contexts: usize,
    pub blocks: LensBlocks,
}

impl LogitLensTable {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.size() + c]
    }
}

pub fn logit_lens_table<F: Scalar>(params: &ModelParams<F>, trace: &ForwardTrace<F>, examples: &[SymbolicExample]) -> LogitLensTable {
    let k = examples.first().map_or(0, SymbolicExample::chain_count);
    let n = 2 * k;
    let mut entries = vec![0.0; n * n];
    let mut contexts = 0usize;
    for (b, ex) in examples.iter().enumerate() {
        if ex.chain_count() != k {
            continue;
        }
        let chains = ex.chains();
        let positions: Option<Vec<usize>> = (0..k)
            .map(|c| ex.child_position(c, RoleKind::Bridge))
            .chain((0..k).map(|c| ex.child_position(c, RoleKind::End)))
            .collect();
        let Some(positions) = positions else { continue };
        let tokens: Vec<usize> = chains
            .iter()
            .map(|c| c.bridge as usize)
            .chain(chains.iter().map(|c| c.end as usize))
            .collect();
        for (r, &pos) in positions.iter().enumerate() {
            let lens = logit_lens_value(params, trace, b, pos);
            for (c, &tok) in tokens.iter().enumerate() {
                entries[r * n + c] += lens[tok];
            }
        }
        contexts += 1;
    }
    if contexts > 0 {
        entries.iter_mut().for_each(|e| *e /= contexts as f64);
    }
    let at = |r: usize, c: usize| entries[r * n + c];
    let avg = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let diag: Vec<f64> = (0..n).map(|i| at(i, i)).collect();
    let blocks = LensBlocks {
        diagonal_mean: avg(diag.clone()),
        diagonal_abs_mean: avg(diag.iter().map(|x| x.abs()).collect()),
        end_to_bridge_mean: avg((0..k).flat_map(|r| (0..k).map(move |c| (r, c))).map(|(r, c)| at(k + r, c)).collect()),
        end_to_own_bridge_mean: avg((0..k).map(|c| at(k + c, c)).collect()),
        bridge_to_end_mean: avg((0..k).flat_map(|r| (0..k).map(move |c| (r, c))).map(|(r, c)| at(r, k + c)).collect()),
        bridge_to_end_abs_mean: avg((0..k).flat_map(|r| (0..k).map(move |c| (r, c))).map(|(r, c)| at(r, k + c).abs()).collect()),
    };
    let labels = (1..=k).map(|i| format!("B{i}")).chain((1..=k).map(|i| format!("E{i}"))).collect();
    LogitLensTable {
        labels,
        entries,
        contexts,
        blocks,
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &p in &idx[i..=j] {
            out[p] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (ties get average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / libm::sqrt(va * vb)
}

/// The query logits rebuilt as `sum_i w_i · lens(i)` over the last layer's
/// attention weights `w`, compared with the exact logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGuessReport {
    pub reconstruction: Vec<f64>,
    pub exact: Vec<f64>,
    pub rank_correlation: f64,
    pub rmse: f64,
    /// Softmax mass of the reconstruction on all end tokens of the context.
    pub end_mass: f64,
    /// Reconstruction softmax at each chain's end token, by chain index.
    pub end_probs: Vec<f64>,
    pub end_ratio: f64,
    pub mean_end_entry: f64,
    pub mean_bridge_entry: f64,
    pub mean_source_entry: f64,
}

pub fn explain_random_guess<F: Scalar>(params: &ModelParams<F>, trace: &ForwardTrace<F>, b: usize, ex: &SymbolicExample) -> RandomGuessReport {
    let last = trace.layers.len() - 1;
    let qp = ex.query_pos;
    let weights = trace.weights_row(last, b, qp);
    let v = trace.vocab_size;
    let mut reconstruction = vec![0.0; v];
    for (i, w) in weights.iter().enumerate().take(qp + 1) {
        let w = w.f64();
        if w == 0.0 {
            continue;
        }
        for (r, l) in reconstruction.iter_mut().zip(logit_lens_value(params, trace, b, i)) {
            *r += w * l;
        }
    }
    let exact: Vec<f64> = trace.logits_at(b, qp).iter().map(|x| x.f64()).collect();
    let rmse = libm::sqrt(reconstruction.iter().zip(&exact).map(|(a, e)| (a - e) * (a - e)).sum::<f64>() / v as f64);
    let probs = softmax_f64(&reconstruction);
    let chains = ex.chains();
    let end_probs: Vec<f64> = chains.iter().map(|c| probs[c.end as usize]).collect();
    let max = end_probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = end_probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let avg_at = |f: fn(&crate::taskgen::Chain) -> u32| chains.iter().map(|c| reconstruction[f(c) as usize]).sum::<f64>() / chains.len() as f64;
    RandomGuessReport {
        rank_correlation: spearman(&reconstruction, &exact),
        rmse,
        end_mass: end_probs.iter().sum(),
        end_ratio: max / min,
        end_probs,
        mean_end_entry: avg_at(|c| c.end),
        mean_bridge_entry: avg_at(|c| c.bridge),
        mean_source_entry: avg_at(|c| c.source),
        reconstruction,
        exact,
    }
}

/// Batch means of [`RandomGuessReport`] scalars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomGuessSummary {
    pub examples: usize,
    pub rank_correlation: f64,
    pub rmse: f64,
    pub end_mass: f64,
    /// Geometric mean over examples of max/min end probability.
    pub end_ratio_geomean: f64,
    pub end_ratio_median: f64,
    pub mean_end_entry: f64,
    pub mean_bridge_entry: f64,
    pub mean_source_entry: f64,
}

impl RandomGuessSummary {
    pub fn from_reports(reports: &[RandomGuessReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let avg = |f: fn(&RandomGuessReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut ratios: Vec<f64> = reports.iter().map(|r| r.end_ratio).collect();
        ratios.sort_by(f64::total_cmp);
        let median = match ratios.len() {
            0 => 0.0,
            m if m % 2 == 1 => ratios[m / 2],
            m => 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]),
        };
        RandomGuessSummary {
            examples: reports.len(),
            rank_correlation: avg(|r| r.rank_correlation),
            rmse: avg(|r| r.rmse),
            end_mass: avg(|r| r.end_mass),
            end_ratio_geomean: libm::exp(avg(|r| libm::log(r.end_ratio))),
            end_ratio_median: median,
            mean_end_entry: avg(|r| r.mean_end_entry),
            mean_bridge_entry: avg(|r| r.mean_bridge_entry),
            mean_source_entry: avg(|r| r.mean_source_entry),
        }
    }
}
