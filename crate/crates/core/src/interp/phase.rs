use serde::{Deserialize, Serialize};

/// Crossing levels for a curve rising from ~0 to ~1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    pub low: f64,
    pub mid: f64,
    pub high: f64,
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        PhaseThresholds {
            low: 0.25,
            mid: 0.5,
            high: 0.85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransition {
    /// Last step below `low` before the midpoint crossing.
    pub t_start: usize,
    /// First step at or above `mid`.
    pub t_mid: usize,
    /// First step above `high` after the midpoint, if reached.
    pub t_end: Option<usize>,
    /// `(t_end - t_start) / total_steps`; absent when `t_end` is.
    pub sharpness: Option<f64>,
}

/// Locates the rise of a `(step, value)` curve through the thresholds.
/// Returns `None` when the curve never reaches `mid`.
pub fn detect_phase_transition(points: &[(usize, f64)], th: &PhaseThresholds) -> Option<PhaseTransition> {
    let first = points.first()?.0;
    let last = points.last()?.0;
    let mid_idx = points.iter().position(|&(_, v)| v >= th.mid)?;
    let t_mid = points[mid_idx].0;
    let t_start = points[..mid_idx]
        .iter()
        .rev()
        .find(|&&(_, v)| v < th.low)
        .map_or(first, |&(s, _)| s);
    let t_end = points[mid_idx..].iter().find(|&&(_, v)| v > th.high).map(|&(s, _)| s);
    let total = (last - first).max(1) as f64;
    Some(PhaseTransition {
        t_start,
        t_mid,
        t_end,
        sharpness: t_end.map(|e| (e - t_start) as f64 / total),
    })
}
