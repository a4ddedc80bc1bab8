use serde::{Deserialize, Serialize};

use crate::model::{predict_probs, ForwardTrace};
use crate::scalar::Scalar;
use crate::taskgen::SymbolicExample;

/// Query-position probability mass grouped by token role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryProbs {
    pub p_target_end: f64,
    /// Averaged over the distractor ends of the context.
    pub p_nontarget_end: f64,
    pub p_nontarget_end_sum: f64,
    pub p_target_bridge: f64,
    /// Everything else: `1 - target end - all distractor ends - target bridge`.
    pub p_other: f64,
}

pub fn category_probs<F: Scalar>(trace: &ForwardTrace<F>, b: usize, ex: &SymbolicExample) -> CategoryProbs {
    let probs = predict_probs(trace, b, ex.query_pos);
    let chains = ex.chains();
    let target = &chains[ex.target_chain];
    let p_target_end = probs[target.end as usize];
    let p_target_bridge = probs[target.bridge as usize];
    let others: alloc::vec::Vec<f64> = chains
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != ex.target_chain)
        .map(|(_, ch)| probs[ch.end as usize])
        .collect();
    let sum: f64 = others.iter().sum();
    CategoryProbs {
        p_target_end,
        p_nontarget_end: if others.is_empty() { 0.0 } else { sum / others.len() as f64 },
        p_nontarget_end_sum: sum,
        p_target_bridge,
        p_other: 1.0 - p_target_end - sum - p_target_bridge,
    }
}

/// Per-example categories averaged across the batch.
pub fn batch_category_probs<F: Scalar>(trace: &ForwardTrace<F>, examples: &[SymbolicExample]) -> CategoryProbs {
    let n = examples.len().max(1) as f64;
    examples
        .iter()
        .enumerate()
        .map(|(b, ex)| category_probs(trace, b, ex))
        .fold(CategoryProbs::default(), |acc, c| CategoryProbs {
            p_target_end: acc.p_target_end + c.p_target_end / n,
            p_nontarget_end: acc.p_nontarget_end + c.p_nontarget_end / n,
            p_nontarget_end_sum: acc.p_nontarget_end_sum + c.p_nontarget_end_sum / n,
            p_target_bridge: acc.p_target_bridge + c.p_target_bridge / n,
            p_other: acc.p_other + c.p_other / n,
        })
}
