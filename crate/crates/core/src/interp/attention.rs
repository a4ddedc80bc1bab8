use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::ForwardTrace;
use crate::scalar::Scalar;
use crate::taskgen::{RoleKind, SymbolicExample};

/// Pre-softmax attention logits of one example and layer. Entries above
/// the diagonal are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub seq_len: usize,
    pub entries: Vec<Option<f64>>,
}

impl AttentionMap {
    pub fn get(&self, q: usize, k: usize) -> Option<f64> {
        self.entries[q * self.seq_len + k]
    }

    /// Key position with the largest logit for query `q`.
    pub fn argmax_row(&self, q: usize) -> usize {
        (0..=q)
            .max_by(|&a, &b| self.get(q, a).unwrap_or(f64::NEG_INFINITY).total_cmp(&self.get(q, b).unwrap_or(f64::NEG_INFINITY)))
            .unwrap_or(0)
    }
}

/// Raw logits of example `b` at `layer`, exactly as the forward pass
/// computed them.
pub fn attention_logit_map<F: Scalar>(trace: &ForwardTrace<F>, layer: usize, b: usize) -> AttentionMap {
    let t = trace.seq_len;
    let mut entries = vec![None; t * t];
    for q in 0..t {
        let row = trace.logits_row(layer, b, q);
        for k in 0..=q {
            entries[q * t + k] = Some(row[k].f64());
        }
    }
    AttentionMap { seq_len: t, entries }
}

/// Which (query role -> key role) bucket a causal cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolePair {
    BosToBos,
    ParentToBos,
    ParentToParent,
    ParentToChild,
    ChildToBos,
    ChildToOwnParent,
    ChildToOtherParent,
    ChildToChild,
    QueryToBos,
    QueryToParent,
    QueryToTargetBridge,
    QueryToTargetEnd,
    QueryToOtherChild,
    QueryToSelf,
    LabelToAny,
}

impl RolePair {
    pub const ALL: [RolePair; 15] = [
        RolePair::BosToBos,
        RolePair::ParentToBos,
        RolePair::ParentToParent,
        RolePair::ParentToChild,
        RolePair::ChildToBos,
        RolePair::ChildToOwnParent,
        RolePair::ChildToOtherParent,
        RolePair::ChildToChild,
        RolePair::QueryToBos,
        RolePair::QueryToParent,
        RolePair::QueryToTargetBridge,
        RolePair::QueryToTargetEnd,
        RolePair::QueryToOtherChild,
        RolePair::QueryToSelf,
        RolePair::LabelToAny,
    ];

    pub fn index(self) -> usize {
        RolePair::ALL.iter().position(|&r| r == self).expect("listed")
    }
}

impl fmt::Display for RolePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Bucket of the causal cell `(q, k)`, `k <= q`.
pub fn role_pair(ex: &SymbolicExample, q: usize, k: usize) -> RolePair {
    debug_assert!(k <= q);
    let qp = ex.query_pos;
    if q > qp {
        return RolePair::LabelToAny;
    }
    if q == qp {
        if k == q {
            return RolePair::QueryToSelf;
        }
        if k == 0 {
            return RolePair::QueryToBos;
        }
        if ex.is_parent_pos(k) {
            return RolePair::QueryToParent;
        }
        let role = ex.roles[k];
        if role.target && role.kind == RoleKind::Bridge {
            return RolePair::QueryToTargetBridge;
        }
        if role.target && role.kind == RoleKind::End {
            return RolePair::QueryToTargetEnd;
        }
        return RolePair::QueryToOtherChild;
    }
    if q == 0 {
        return RolePair::BosToBos;
    }
    if ex.is_parent_pos(q) {
        return match k {
            0 => RolePair::ParentToBos,
            _ if ex.is_parent_pos(k) => RolePair::ParentToParent,
            _ => RolePair::ParentToChild,
        };
    }
    match k {
        0 => RolePair::ChildToBos,
        _ if k + 1 == q => RolePair::ChildToOwnParent,
        _ if ex.is_parent_pos(k) => RolePair::ChildToOtherParent,
        _ => RolePair::ChildToChild,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub pair: RolePair,
    pub cells: usize,
    pub mean_logit: f64,
    pub mean_weight: f64,
}

/// Batch-averaged attention statistics of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAttention {
    pub layer: usize,
    pub buckets: Vec<BucketStat>,
    /// Mean child -> parent-key logit minus mean child -> earlier-child-key logit.
    pub chessboard_score: f64,
    /// Fraction of (example, child position) pairs whose weight on the
    /// paired parent exceeds one half.
    pub child_parent_top1_fraction: f64,
    /// Fraction of child positions whose largest logit is on the paired parent.
    pub child_parent_argmax_fraction: f64,
    pub child_parent_weight: f64,
    pub query_target_bridge_weight: f64,
    pub query_target_end_weight: f64,
    /// Coefficient of variation of the query's weights over the premise
    /// child positions, averaged over examples.
    pub query_child_weight_cv: f64,
    /// Fraction of child positions whose logits over earlier parent keys
    /// have a spread below a quarter of the parent-vs-child logit gap.
    pub child_parent_logit_uniform_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub layers: Vec<LayerAttention>,
}

impl AttentionSummary {
    pub fn layer(&self, l: usize) -> &LayerAttention {
        &self.layers[l]
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    libm::sqrt(mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>()))
}

pub fn attention_summary<F: Scalar>(trace: &ForwardTrace<F>, examples: &[SymbolicExample]) -> AttentionSummary {
    let layers = (0..trace.layers.len()).map(|l| layer_attention(trace, examples, l)).collect();
    AttentionSummary { layers }
}

fn layer_attention<F: Scalar>(trace: &ForwardTrace<F>, examples: &[SymbolicExample], layer: usize) -> LayerAttention {
    let nb = RolePair::ALL.len();
    let mut cells = vec![0usize; nb];
    let mut logit_sum = vec![0.0; nb];
    let mut weight_sum = vec![0.0; nb];
    let mut board_parent = Vec::new();
    let mut board_child = Vec::new();
    let (mut top1, mut argmax, mut children) = (0usize, 0usize, 0usize);
    let mut child_parent_w = Vec::new();
    let mut q_bridge = Vec::new();
    let mut q_end = Vec::new();
    let mut q_cv = Vec::new();
    let (mut uniform, mut uniform_total) = (0usize, 0usize);

    for (b, ex) in examples.iter().enumerate() {
        for q in 0..trace.seq_len {
            let logits = trace.logits_row(layer, b, q);
            let weights = trace.weights_row(layer, b, q);
            for k in 0..=q {
                let i = role_pair(ex, q, k).index();
                cells[i] += 1;
                logit_sum[i] += logits[k].f64();
                weight_sum[i] += weights[k].f64();
            }
            if ex.is_child_pos(q) {
                children += 1;
                let parents: Vec<f64> = (1..q).filter(|&k| ex.is_parent_pos(k)).map(|k| logits[k].f64()).collect();
                let kids: Vec<f64> = (1..q).filter(|&k| ex.is_child_pos(k)).map(|k| logits[k].f64()).collect();
                board_parent.extend_from_slice(&parents);
                board_child.extend_from_slice(&kids);
                let w = weights[q - 1].f64();
                child_parent_w.push(w);
                if w > 0.5 {
                    top1 += 1;
                }
                let best = (0..=q).max_by(|&x, &y| logits[x].f64().total_cmp(&logits[y].f64())).unwrap_or(0);
                if best == q - 1 {
                    argmax += 1;
                }
                if parents.len() >= 2 && !kids.is_empty() {
                    uniform_total += 1;
                    let gap = mean(&parents) - mean(&kids);
                    if std_dev(&parents) < 0.25 * gap.abs() {
                        uniform += 1;
                    }
                }
            }
        }
        let qp = ex.query_pos;
        let weights = trace.weights_row(layer, b, qp);
        let k = ex.chain_count();
        let tb = ex.child_position(ex.target_chain, RoleKind::Bridge);
        let te = ex.child_position(ex.target_chain, RoleKind::End);
        if let (Some(tb), Some(te)) = (tb, te) {
            q_bridge.push(weights[tb].f64());
            q_end.push(weights[te].f64());
        }
        let child_w: Vec<f64> = (1..=4 * k).filter(|&p| p % 2 == 0).map(|p| weights[p].f64()).collect();
        let m = mean(&child_w);
        if m > 0.0 {
            q_cv.push(std_dev(&child_w) / m);
        }
    }

    let buckets = RolePair::ALL
        .iter()
        .enumerate()
        .map(|(i, &pair)| BucketStat {
            pair,
            cells: cells[i],
            mean_logit: if cells[i] > 0 { logit_sum[i] / cells[i] as f64 } else { 0.0 },
            mean_weight: if cells[i] > 0 { weight_sum[i] / cells[i] as f64 } else { 0.0 },
        })
        .collect();
    let frac = |n: usize, d: usize| if d > 0 { n as f64 / d as f64 } else { 0.0 };
    LayerAttention {
        layer,
        buckets,
        chessboard_score: mean(&board_parent) - mean(&board_child),
        child_parent_top1_fraction: frac(top1, children),
        child_parent_argmax_fraction: frac(argmax, children),
        child_parent_weight: mean(&child_parent_w),
        query_target_bridge_weight: mean(&q_bridge),
        query_target_end_weight: mean(&q_end),
        query_child_weight_cv: mean(&q_cv),
        child_parent_logit_uniform_fraction: frac(uniform, uniform_total),
    }
}
