//! Checkpoint analysis: attention heatmaps, logit lens, category
//! probabilities and the value-decomposition account of random guessing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twohop_core::interp::{
    attention_logit_map, attention_summary, batch_category_probs, detect_phase_transition, explain_random_guess,
    logit_lens_table, AttentionMap, AttentionSummary, CategoryProbs, LensBlocks, LogitLensTable, PhaseThresholds,
    PhaseTransition, RandomGuessSummary,
};
use twohop_core::model::{forward, ForwardTrace, ModelParams};
use twohop_core::taskgen::SymbolicExample;
use twohop_core::training::MetricsRecord;

use crate::error::{LabError, Result};
use crate::io::{create_parent, load_checkpoint, read_jsonl, read_symbolic_dataset, write_json};
use crate::manifest::{create_output_dir, RunManifest};

/// Writes a matrix as CSV with a labeled header row and a label column.
/// `None` entries are written as empty cells.
pub fn export_heatmap(path: &Path, row_labels: &[String], col_labels: &[String], entries: &[Option<f64>]) -> Result<()> {
    assert_eq!(entries.len(), row_labels.len() * col_labels.len(), "matrix shape matches labels");
    create_parent(path)?;
    let csv_err = |source| LabError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header = std::iter::once(String::new()).chain(col_labels.iter().cloned());
    w.write_record(header).map_err(csv_err)?;
    for (r, label) in row_labels.iter().enumerate() {
        let row = &entries[r * col_labels.len()..(r + 1) * col_labels.len()];
        let cells = std::iter::once(label.clone()).chain(row.iter().map(|e| e.map_or_else(String::new, |x| x.to_string())));
        w.write_record(cells).map_err(csv_err)?;
    }
    w.flush().map_err(LabError::io(path))
}

/// `position:role` labels, e.g. `5:source:2:target`.
pub fn role_labels(ex: &SymbolicExample) -> Vec<String> {
    ex.roles.iter().enumerate().map(|(p, r)| format!("{p}:{r}")).collect()
}

/// Labels by position type only, valid for every example of a batch.
pub fn position_labels(ex: &SymbolicExample) -> Vec<String> {
    (0..ex.tokens.len())
        .map(|p| {
            let kind = if p == 0 {
                "bos"
            } else if p == ex.query_pos {
                "query"
            } else if p > ex.query_pos {
                "label"
            } else if ex.is_parent_pos(p) {
                "parent"
            } else {
                "child"
            };
            format!("{p}:{kind}")
        })
        .collect()
}

/// Batch mean of the pre-softmax logits; masked cells are `None`.
pub fn mean_logit_map(trace: &ForwardTrace<f32>, layer: usize) -> AttentionMap {
    let t = trace.seq_len;
    let mut sums = vec![0.0; t * t];
    for b in 0..trace.batch {
        let map = attention_logit_map(trace, layer, b);
        for (s, e) in sums.iter_mut().zip(&map.entries) {
            if let Some(x) = e {
                *s += x;
            }
        }
    }
    let n = trace.batch.max(1) as f64;
    AttentionMap {
        seq_len: t,
        entries: (0..t * t).map(|i| (i % t <= i / t).then(|| sums[i] / n)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpSummary {
    pub step: usize,
    pub examples: usize,
    pub eval_loss: f64,
    pub category_probs: CategoryProbs,
    pub attention: AttentionSummary,
    pub logit_lens: LensBlocks,
    pub random_guess: RandomGuessSummary,
}

pub struct Analysis {
    pub summary: InterpSummary,
    pub lens: LogitLensTable,
    pub trace: ForwardTrace<f32>,
}

pub fn analyze(params: &ModelParams<f32>, examples: &[SymbolicExample], step: usize) -> Result<Analysis> {
    let batch: Vec<&[u32]> = examples.iter().map(|e| e.tokens.as_slice()).collect();
    let trace = forward(params, &batch)?;
    let targets: Vec<_> = examples.iter().map(Into::into).collect();
    let lens = logit_lens_table(params, &trace, examples);
    let reports: Vec<_> = examples
        .iter()
        .enumerate()
        .map(|(b, ex)| explain_random_guess(params, &trace, b, ex))
        .collect();
    let summary = InterpSummary {
        step,
        examples: examples.len(),
        eval_loss: twohop_core::model::loss_at_query(&trace, &targets),
        category_probs: batch_category_probs(&trace, examples),
        attention: attention_summary(&trace, examples),
        logit_lens: lens.blocks,
        random_guess: RandomGuessSummary::from_reports(&reports),
    };
    Ok(Analysis { summary, lens, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub thresholds: PhaseThresholds,
    pub total_steps: usize,
    pub transition: Option<PhaseTransition>,
}

pub fn transition_report(metrics: &[MetricsRecord], thresholds: &PhaseThresholds) -> TransitionReport {
    let points: Vec<(usize, f64)> = metrics.iter().map(|r| (r.step, r.p_target_end)).collect();
    TransitionReport {
        thresholds: *thresholds,
        total_steps: metrics.last().map_or(0, |r| r.step),
        transition: detect_phase_transition(&points, thresholds),
    }
}

#[derive(Debug, Clone)]
pub struct InterpOptions {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub metrics: Option<PathBuf>,
    /// Number of individual examples whose role-labeled maps are exported.
    pub example_maps: usize,
}

/// Runs the full analysis of one checkpoint and writes every export.
pub fn interp_run(opts: &InterpOptions) -> Result<InterpSummary> {
    let ckpt = load_checkpoint(&opts.checkpoint)?;
    let vocab = ckpt.config.gen_config().vocab();
    let examples = read_symbolic_dataset(&opts.dataset, &vocab)?;
    if examples.is_empty() {
        return Err(LabError::Usage(format!("{} holds no examples", opts.dataset.display())));
    }
    let dir = opts.out.as_path();
    create_output_dir(dir)?;
    let mut manifest = RunManifest::new("interp", &(&opts.checkpoint, &opts.dataset), ckpt.config.seed);
    manifest.save(dir)?;

    let analysis = analyze(&ckpt.params, &examples, ckpt.step)?;
    let trace = &analysis.trace;
    let pos_labels = position_labels(&examples[0]);
    for layer in 0..trace.layers.len() {
        let rel = format!("attention/layer{layer}_mean_logits.csv");
        export_heatmap(&dir.join(&rel), &pos_labels, &pos_labels, &mean_logit_map(trace, layer).entries)?;
        manifest.record(rel);
        for b in 0..opts.example_maps.min(examples.len()) {
            let labels = role_labels(&examples[b]);
            let rel = format!("attention/layer{layer}_example{b}_logits.csv");
            export_heatmap(&dir.join(&rel), &labels, &labels, &attention_logit_map(trace, layer, b).entries)?;
            manifest.record(rel);
        }
    }
    let lens = &analysis.lens;
    let lens_entries: Vec<Option<f64>> = lens.entries.iter().map(|&x| Some(x)).collect();
    export_heatmap(&dir.join("logit_lens.csv"), &lens.labels, &lens.labels, &lens_entries)?;
    manifest.record("logit_lens.csv");
    write_json(&dir.join("summary.json"), &analysis.summary)?;
    manifest.record("summary.json");
    if let Some(metrics_path) = &opts.metrics {
        let metrics: Vec<MetricsRecord> = read_jsonl(metrics_path)?;
        write_json(&dir.join("transition.json"), &transition_report(&metrics, &PhaseThresholds::default()))?;
        manifest.record("transition.json");
    }
    manifest.finish(dir)?;
    Ok(analysis.summary)
}
