//! Interpretability probes over forward traces.
//!
//! All batch summaries are plain means over the examples of one trace, so
//! they do not depend on evaluation order.

mod attention;
mod lens;
mod phase;
mod probs;

pub use attention::{
    attention_logit_map, attention_summary, role_pair, AttentionMap, AttentionSummary, BucketStat, LayerAttention, RolePair,
};
pub use lens::{
    explain_random_guess, logit_lens_table, logit_lens_value, logit_lens_value_at, spearman, LensBlocks, LogitLensTable,
    RandomGuessReport, RandomGuessSummary,
};
pub use phase::{detect_phase_transition, PhaseThresholds, PhaseTransition};
pub use probs::{batch_category_probs, category_probs, CategoryProbs};
