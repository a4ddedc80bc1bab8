//! The three-parameter dynamical model of two-hop learning.
//!
//! `alpha` measures how strongly layer 1 copies each parent into its child,
//! `beta` how strongly the layer-2 query attends to the target bridge and
//! `gamma` how strongly the layer-3 query attends to the target end. Under
//! an orthonormal-embedding assumption all inner products collapse to
//! products of the attention weights, giving the scalar system
//!
//! ```text
//! w1 = S(alpha, N)
//! w2 = S(beta * w1, 2N)
//! w3 = S(gamma * w1 * w2, 2N)
//! loss = -ln S(xi * w3, V)
//! ```
//!
//! with `S(u, M) = e^u / (e^u + M)`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{detect_phase_transition, PhaseThresholds, PhaseTransition};
use crate::training::MetricsRecord;

/// `e^u / (e^u + m)` without overflow for large `|u|`.
pub fn approx_softmax(u: f64, m: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + m * libm::exp(-u))
    } else {
        let e = libm::exp(u);
        e / (e + m)
    }
}

/// `-ln S(u, m) = ln(1 + m e^-u)`, stable for large `|u|`.
fn neg_log_approx_softmax(u: f64, m: f64) -> f64 {
    let z = libm::log(m) - u;
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreeParamState {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ThreeParamState {
    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreeParamHyper {
    /// Readout scale.
    pub xi: f64,
    /// Premise count in the softmax denominators.
    pub n: f64,
    pub vocab: f64,
    pub lr: f64,
    pub steps: usize,
}

impl Default for ThreeParamHyper {
    fn default() -> Self {
        ThreeParamHyper {
            xi: 30.0,
            n: 10.0,
            vocab: 65.0,
            lr: 0.1,
            steps: 3000,
        }
    }
}

impl ThreeParamHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::config("xi", "must be positive"));
        }
        if !(self.n >= 1.0 && self.n.is_finite()) {
            return Err(Error::config("n", "must be at least 1"));
        }
        if !(self.vocab >= 2.0 && self.vocab.is_finite()) {
            return Err(Error::config("vocab", "must be at least 2"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

pub fn weights(s: &ThreeParamState, h: &ThreeParamHyper) -> Weights {
    let w1 = approx_softmax(s.alpha, h.n);
    let w2 = approx_softmax(s.beta * w1, 2.0 * h.n);
    let w3 = approx_softmax(s.gamma * w1 * w2, 2.0 * h.n);
    Weights { w1, w2, w3 }
}

pub fn forward_loss(s: &ThreeParamState, h: &ThreeParamHyper) -> (Weights, f64) {
    let w = weights(s, h);
    (w, neg_log_approx_softmax(h.xi * w.w3, h.vocab))
}

/// Exact gradient of [`forward_loss`] with respect to `(alpha, beta, gamma)`.
pub fn grad(s: &ThreeParamState, h: &ThreeParamHyper) -> ThreeParamState {
    let Weights { w1, w2, w3 } = weights(s, h);
    let p = approx_softmax(h.xi * w3, h.vocab);
    let d_w3 = -h.xi * (1.0 - p);
    // gradients with respect to the pre-softmax arguments
    let d_c = d_w3 * w3 * (1.0 - w3);
    let d_w2 = d_c * s.gamma * w1;
    let d_a = d_w2 * w2 * (1.0 - w2);
    let d_w1 = d_c * s.gamma * w2 + d_a * s.beta;
    ThreeParamState {
        alpha: d_w1 * w1 * (1.0 - w1),
        beta: d_a * w1,
        gamma: d_c * w1 * w2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub hyper: ThreeParamHyper,
    /// `steps + 1` points: the state before each update and the final state.
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn loss_curve(&self) -> Vec<(usize, f64)> {
        self.points.iter().map(|p| (p.step, p.loss)).collect()
    }
}

/// Plain gradient descent from `init`.
pub fn simulate(init: ThreeParamState, hyper: &ThreeParamHyper) -> Result<Trajectory> {
    hyper.validate()?;
    if hyper.steps == 0 {
        return Err(Error::config("steps", "must be at least 1"));
    }
    let mut s = init;
    let mut points = Vec::with_capacity(hyper.steps + 1);
    for step in 0..=hyper.steps {
        if !s.is_finite() {
            return Err(Error::NonFinite {
                what: "three-parameter state",
                step,
                value: s.alpha + s.beta + s.gamma,
            });
        }
        let (w, loss) = forward_loss(&s, hyper);
        points.push(TrajectoryPoint {
            step,
            alpha: s.alpha,
            beta: s.beta,
            gamma: s.gamma,
            w1: w.w1,
            w2: w.w2,
            w3: w.w3,
            loss,
        });
        if step < hyper.steps {
            let g = grad(&s, hyper);
            s.alpha -= hyper.lr * g.alpha;
            s.beta -= hyper.lr * g.beta;
            s.gamma -= hyper.lr * g.gamma;
        }
    }
    Ok(Trajectory { hyper: *hyper, points })
}

/// Number of leading steps (as a fraction of the run) during which the
/// loss stays within `rel` of its initial value.
pub fn flat_segment_fraction(curve: &[(usize, f64)], rel: f64) -> f64 {
    let (Some(first), Some(last)) = (curve.first(), curve.last()) else {
        return 0.0;
    };
    let span = (last.0 - first.0).max(1) as f64;
    let l0 = first.1;
    let end = curve
        .iter()
        .take_while(|(_, l)| (l - l0).abs() <= rel * l0.abs())
        .last()
        .map_or(first.0, |p| p.0);
    (end - first.0) as f64 / span
}

/// Maps a loss curve to normalized progress in success probability:
/// `(e^-L - e^-L0) / (e^-Lf - e^-L0)`. Returns `None` when the success
/// probability gains less than `min_gain` over the run.
pub fn normalized_progress(curve: &[(usize, f64)], min_gain: f64) -> Option<Vec<(usize, f64)>> {
    let p0 = libm::exp(-curve.first()?.1);
    let pf = libm::exp(-curve.last()?.1);
    let gain = pf - p0;
    if !(gain >= min_gain) {
        return None;
    }
    Some(curve.iter().map(|&(s, l)| (s, (libm::exp(-l) - p0) / gain)).collect())
}

/// Longest contiguous stretch of `curve` within `tol` of `level`, among
/// points strictly before `until`, in steps.
fn longest_band(curve: &[(usize, f64)], level: f64, tol: f64, until: usize) -> usize {
    let mut best = 0;
    let mut start: Option<usize> = None;
    for &(s, l) in curve.iter().take_while(|(s, _)| *s < until) {
        if (l - level).abs() <= tol {
            let s0 = *start.get_or_insert(s);
            best = best.max(s - s0);
        } else {
            start = None;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    /// Random-guessing loss level, `-ln(1/k)` for k chains.
    pub plateau_level: f64,
    pub plateau_tolerance: f64,
    /// Minimum share of pre-transition steps the transformer must spend
    /// on the plateau.
    pub min_plateau_fraction: f64,
    /// Maximum share the three-parameter curve may spend there.
    pub max_threeparam_plateau_fraction: f64,
    /// The three-parameter flat segment: loss within `flat_rel` of its
    /// initial value for at least `min_flat_fraction` of the run.
    pub flat_rel: f64,
    pub min_flat_fraction: f64,
    pub max_sharpness: f64,
    /// Maximum spread of the half-value crossings, as a share of the run.
    pub max_sync_fraction: f64,
    /// Minimum gain in success probability for a curve to count as
    /// transitioning at all.
    pub min_gain: f64,
    pub thresholds: PhaseThresholds,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            plateau_level: libm::log(5.0),
            plateau_tolerance: 0.4,
            min_plateau_fraction: 0.25,
            max_threeparam_plateau_fraction: 0.05,
            flat_rel: 0.01,
            min_flat_fraction: 0.10,
            max_sharpness: 0.2,
            max_sync_fraction: 0.10,
            min_gain: 0.1,
            thresholds: PhaseThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveAnalysis {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub transition: Option<PhaseTransition>,
    /// Longest stretch near the random-guessing level before the
    /// transition midpoint, as a share of the pre-transition steps.
    pub plateau_fraction: f64,
    pub flat_fraction: f64,
}

fn analyze(curve: &[(usize, f64)], cfg: &CompareConfig) -> CurveAnalysis {
    let transition = normalized_progress(curve, cfg.min_gain).and_then(|p| detect_phase_transition(&p, &cfg.thresholds));
    let first = curve.first().map_or(0, |p| p.0);
    let last = curve.last().map_or(0, |p| p.0);
    let until = transition.as_ref().map_or(last + 1, |t| t.t_mid);
    let pre = (until.min(last) - first).max(1);
    CurveAnalysis {
        initial_loss: curve.first().map_or(f64::NAN, |p| p.1),
        final_loss: curve.last().map_or(f64::NAN, |p| p.1),
        plateau_fraction: longest_band(curve, cfg.plateau_level, cfg.plateau_tolerance, until) as f64 / pre as f64,
        flat_fraction: flat_segment_fraction(curve, cfg.flat_rel),
        transition,
    }
}

fn abrupt(a: &CurveAnalysis, cfg: &CompareConfig) -> bool {
    a.transition
        .as_ref()
        .and_then(|t| t.sharpness)
        .is_some_and(|s| s < cfg.max_sharpness)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synchrony {
    /// First step at which alpha, beta, gamma reach half their final value.
    pub half_crossings: [Option<usize>; 3],
    pub window: Option<usize>,
    pub window_fraction: Option<f64>,
    pub synchronized: bool,
}

pub fn synchrony(traj: &Trajectory, max_fraction: f64) -> Synchrony {
    let total = traj.points.last().map_or(0, |p| p.step).max(1);
    let cross = |get: fn(&TrajectoryPoint) -> f64| -> Option<usize> {
        let last = get(traj.points.last()?);
        if !(last > 0.0) {
            return None;
        }
        traj.points.iter().find(|p| get(p) >= 0.5 * last).map(|p| p.step)
    };
    let half_crossings = [cross(|p| p.alpha), cross(|p| p.beta), cross(|p| p.gamma)];
    let window = match half_crossings {
        [Some(a), Some(b), Some(c)] => Some(a.max(b).max(c) - a.min(b).min(c)),
        _ => None,
    };
    let window_fraction = window.map(|w| w as f64 / total as f64);
    Synchrony {
        half_crossings,
        window,
        window_fraction,
        synchronized: window_fraction.is_some_and(|f| f <= max_fraction),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub config: CompareConfig,
    pub threeparam: CurveAnalysis,
    pub transformer: CurveAnalysis,
    /// The random-guessing plateau belongs to the transformer alone: the
    /// three-parameter model sits at its initial loss and then drops
    /// straight through the random-guessing level.
    pub hypothesis1: bool,
    /// Both curves transition abruptly.
    pub hypothesis2: bool,
    pub synchrony: Synchrony,
}

/// Compares a three-parameter trajectory with a transformer's training
/// loss curve.
pub fn compare_dynamics(traj: &Trajectory, transformer: &[MetricsRecord], cfg: &CompareConfig) -> HypothesisReport {
    let tp_curve = traj.loss_curve();
    let tf_curve: Vec<(usize, f64)> = transformer.iter().map(|r| (r.step, r.train_loss)).collect();
    let threeparam = analyze(&tp_curve, cfg);
    let transformer = analyze(&tf_curve, cfg);
    let hypothesis1 = threeparam.transition.is_some()
        && transformer.transition.is_some()
        && transformer.plateau_fraction >= cfg.min_plateau_fraction
        && threeparam.plateau_fraction < cfg.max_threeparam_plateau_fraction
        && threeparam.flat_fraction >= cfg.min_flat_fraction;
    let hypothesis2 = abrupt(&threeparam, cfg) && abrupt(&transformer, cfg);
    HypothesisReport {
        config: *cfg,
        hypothesis1,
        hypothesis2,
        synchrony: synchrony(traj, cfg.max_sync_fraction),
        threeparam,
        transformer,
    }
}
