//! One consolidated, deterministic report per training run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twohop_core::interp::PhaseThresholds;
use twohop_core::rng::Domain;
use twohop_core::taskgen::make_batch;
use twohop_core::threeparam::{compare_dynamics, simulate, CompareConfig, HypothesisReport, ThreeParamHyper, ThreeParamState};
use twohop_core::training::{MetricsRecord, RunConfig};

use crate::analysis::{analyze, transition_report, InterpSummary, TransitionReport};
use crate::error::{LabError, Result};
use crate::io::{load_checkpoint, read_json, read_jsonl, write_json};
use crate::manifest::config_hash;
use crate::train::{checkpoint_path, CONFIG_FILE, METRICS_FILE};

/// Pass/fail thresholds applied to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCriteria {
    pub plateau_loss: f64,
    pub plateau_loss_tolerance: f64,
    pub plateau_prob_range: (f64, f64),
    pub plateau_max_gap: f64,
    pub transition_window: (usize, usize),
    pub max_sharpness: f64,
    pub converged_prob: f64,
    pub converged_min_gap: f64,
    pub child_parent_fraction: f64,
    pub circuit_weight: f64,
    pub max_query_child_cv: f64,
    pub max_bridge_to_end_share: f64,
    pub min_end_mass: f64,
    pub max_end_ratio: f64,
    pub min_rank_correlation: f64,
    pub threeparam_flat_fraction: f64,
    pub threeparam_final_loss: f64,
}

impl Default for ReportCriteria {
    fn default() -> Self {
        ReportCriteria {
            plateau_loss: 5f64.ln(),
            plateau_loss_tolerance: 0.4,
            plateau_prob_range: (0.10, 0.45),
            plateau_max_gap: 0.15,
            transition_window: (300, 3000),
            max_sharpness: 0.2,
            converged_prob: 0.9,
            converged_min_gap: 0.6,
            child_parent_fraction: 0.9,
            circuit_weight: 0.5,
            max_query_child_cv: 0.5,
            max_bridge_to_end_share: 0.25,
            min_end_mass: 0.8,
            max_end_ratio: 2.0,
            min_rank_correlation: 0.9,
            threeparam_flat_fraction: 0.10,
            threeparam_final_loss: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Eval records with step in `[t_start / 2, t_start]`, where `t_start` is
/// where the target-end probability last sat below the low threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauWindow {
    pub from: usize,
    pub to: usize,
    pub records: usize,
    pub train_loss: (f64, f64),
    pub p_target_end: (f64, f64),
    pub p_nontarget_end: (f64, f64),
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub step: usize,
    pub eval_loss: f64,
    pub p_target_end: f64,
    pub p_nontarget_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub n_layers: usize,
    pub criteria: ReportCriteria,
    pub transition: TransitionReport,
    pub plateau: Option<PlateauWindow>,
    pub final_metrics: FinalMetrics,
    pub slow_phase: InterpSummary,
    pub structured_phase: InterpSummary,
    pub dynamics: HypothesisReport,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub run_dir: PathBuf,
    pub out: PathBuf,
    pub slow_step: usize,
    pub analysis_examples: usize,
}

fn range(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn plateau_window(metrics: &[MetricsRecord], transition: &TransitionReport) -> Option<PlateauWindow> {
    let t_start = transition.transition.as_ref()?.t_start;
    let from = t_start / 2;
    let window: Vec<&MetricsRecord> = metrics.iter().filter(|r| r.step >= from && r.step <= t_start).collect();
    if window.is_empty() {
        return None;
    }
    Some(PlateauWindow {
        from,
        to: t_start,
        records: window.len(),
        train_loss: range(window.iter().map(|r| r.train_loss)),
        p_target_end: range(window.iter().map(|r| r.p_target_end)),
        p_nontarget_end: range(window.iter().map(|r| r.p_nontarget_end)),
        max_gap: window.iter().map(|r| (r.p_target_end - r.p_nontarget_end).abs()).fold(0.0, f64::max),
    })
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Evaluates every per-run criterion on already computed quantities.
pub fn evaluate_checks(
    c: &ReportCriteria,
    transition: &TransitionReport,
    plateau: Option<&PlateauWindow>,
    last: &FinalMetrics,
    slow: &InterpSummary,
    structured: &InterpSummary,
    dynamics: &HypothesisReport,
) -> Vec<Check> {
    let mut out = Vec::new();

    let (lo, hi) = c.plateau_prob_range;
    let inside = |r: (f64, f64)| r.0 >= lo && r.1 <= hi;
    out.push(match plateau {
        Some(p) => check(
            "plateau",
            inside(p.p_target_end)
                && inside(p.p_nontarget_end)
                && p.max_gap < c.plateau_max_gap
                && (p.train_loss.0 - c.plateau_loss).abs() <= c.plateau_loss_tolerance
                && (p.train_loss.1 - c.plateau_loss).abs() <= c.plateau_loss_tolerance,
            format!(
                "steps {}..={} ({} records): train loss {:.3}..{:.3}, target end {:.3}..{:.3}, other ends {:.3}..{:.3}, gap <= {:.3}",
                p.from, p.to, p.records, p.train_loss.0, p.train_loss.1, p.p_target_end.0, p.p_target_end.1, p.p_nontarget_end.0, p.p_nontarget_end.1, p.max_gap
            ),
        ),
        None => check("plateau", false, "no pre-transition window".into()),
    });

    out.push(match &transition.transition {
        Some(t) => check(
            "transition",
            (c.transition_window.0..=c.transition_window.1).contains(&t.t_mid) && t.sharpness.is_some_and(|s| s < c.max_sharpness),
            format!("t_start {} t_mid {} t_end {:?} sharpness {:?}", t.t_start, t.t_mid, t.t_end, t.sharpness),
        ),
        None => check("transition", false, "target-end probability never reaches the midpoint".into()),
    });

    out.push(check(
        "convergence",
        last.p_target_end >= c.converged_prob && last.p_target_end - last.p_nontarget_end > c.converged_min_gap,
        format!("step {}: target end {:.3}, other ends {:.3}", last.step, last.p_target_end, last.p_nontarget_end),
    ));

    let layers = &structured.attention.layers;
    let circuits = layers.len() >= 3 && {
        layers[0].child_parent_top1_fraction >= c.child_parent_fraction
            && layers[1].query_target_bridge_weight > c.circuit_weight
            && layers[2].query_target_end_weight > c.circuit_weight
    };
    out.push(check(
        "structured circuits",
        circuits,
        match layers.len() {
            n if n >= 3 => format!(
                "step {}: child->parent top-1 {:.3}, query->target bridge {:.3}, query->target end {:.3}",
                structured.step,
                layers[0].child_parent_top1_fraction,
                layers[1].query_target_bridge_weight,
                layers[2].query_target_end_weight
            ),
            n => format!("model has {n} layers"),
        },
    ));

    let lens = &slow.logit_lens;
    let slow_layers = &slow.attention.layers;
    let cv = slow_layers.last().map_or(f64::INFINITY, |l| l.query_child_weight_cv);
    let board = slow_layers.first().map_or(f64::NAN, |l| l.chessboard_score);
    out.push(check(
        "slow-phase signatures",
        board > 0.0
            && cv < c.max_query_child_cv
            && lens.diagonal_mean > 0.0
            && lens.end_to_bridge_mean < 0.0
            && lens.bridge_to_end_abs_mean < c.max_bridge_to_end_share * lens.diagonal_abs_mean,
        format!(
            "step {}: chessboard {:.3}, query child cv {:.3}, lens diagonal {:.3}, end->bridge {:.3}, |bridge->end| {:.3}",
            slow.step, board, cv, lens.diagonal_mean, lens.end_to_bridge_mean, lens.bridge_to_end_abs_mean
        ),
    ));

    let rg = &slow.random_guess;
    out.push(check(
        "random-guess reconstruction",
        rg.end_mass >= c.min_end_mass && rg.end_ratio_median <= c.max_end_ratio && rg.rank_correlation > c.min_rank_correlation,
        format!(
            "step {}: end mass {:.3}, median max/min end ratio {:.3}, rank correlation {:.3}",
            slow.step, rg.end_mass, rg.end_ratio_median, rg.rank_correlation
        ),
    ));

    let tp = &dynamics.threeparam;
    let tp_sharp = tp.transition.as_ref().and_then(|t| t.sharpness);
    out.push(check(
        "three-parameter model",
        tp.flat_fraction >= c.threeparam_flat_fraction
            && tp_sharp.is_some_and(|s| s < c.max_sharpness)
            && tp.final_loss < c.threeparam_final_loss
            && dynamics.synchrony.synchronized,
        format!(
            "flat fraction {:.3}, sharpness {:?}, final loss {:.2e}, half-crossing window {:?}",
            tp.flat_fraction, tp_sharp, tp.final_loss, dynamics.synchrony.window
        ),
    ));
    out.push(check(
        "hypothesis 1",
        dynamics.hypothesis1,
        format!(
            "plateau fraction: transformer {:.3}, three-parameter {:.3}",
            dynamics.transformer.plateau_fraction, tp.plateau_fraction
        ),
    ));
    out.push(check(
        "hypothesis 2",
        dynamics.hypothesis2,
        format!(
            "sharpness: transformer {:?}, three-parameter {:?}",
            dynamics.transformer.transition.as_ref().and_then(|t| t.sharpness),
            tp_sharp
        ),
    ));
    out
}

/// Analyzes a finished run directory and writes the report to `opts.out`.
pub fn report_run(opts: &ReportOptions) -> Result<RunReport> {
    let report = build_report(&opts.run_dir, opts.slow_step, opts.analysis_examples)?;
    write_json(&opts.out, &report)?;
    Ok(report)
}

pub fn build_report(run_dir: &Path, slow_step: usize, analysis_examples: usize) -> Result<RunReport> {
    let config: RunConfig = read_json(&run_dir.join(CONFIG_FILE))?;
    let metrics: Vec<MetricsRecord> = read_jsonl(&run_dir.join(METRICS_FILE))?;
    let Some(last) = metrics.last() else {
        return Err(LabError::Usage(format!("{} holds no records", run_dir.join(METRICS_FILE).display())));
    };
    let final_step = last.step;
    let slow_path = checkpoint_path(run_dir, slow_step);
    let final_path = checkpoint_path(run_dir, final_step);
    let missing: Vec<usize> = [(slow_step, &slow_path), (final_step, &final_path)]
        .into_iter()
        .filter(|(_, p)| !p.is_file())
        .map(|(s, _)| s)
        .collect();
    if !missing.is_empty() {
        return Err(LabError::MissingCheckpoints {
            dir: run_dir.into(),
            steps: missing,
        });
    }

    let examples = make_batch(&config.gen_config(), Domain::Analysis, 0, analysis_examples)?;
    let slow = analyze(&load_checkpoint(&slow_path)?.params, &examples, slow_step)?.summary;
    let structured = analyze(&load_checkpoint(&final_path)?.params, &examples, final_step)?.summary;
    let transition = transition_report(&metrics, &PhaseThresholds::default());
    let plateau = plateau_window(&metrics, &transition);
    let traj = simulate(ThreeParamState::default(), &ThreeParamHyper::default())?;
    let dynamics = compare_dynamics(&traj, &metrics, &CompareConfig::default());
    let final_metrics = FinalMetrics {
        step: final_step,
        eval_loss: last.eval_loss,
        p_target_end: last.p_target_end,
        p_nontarget_end: last.p_nontarget_end,
    };
    let criteria = ReportCriteria::default();
    let checks = evaluate_checks(&criteria, &transition, plateau.as_ref(), &final_metrics, &slow, &structured, &dynamics);
    Ok(RunReport {
        config_hash: config_hash(&config),
        seed: config.seed,
        n_layers: config.model.n_layers,
        criteria,
        transition,
        plateau,
        final_metrics,
        slow_phase: slow,
        structured_phase: structured,
        dynamics,
        checks,
    })
}
