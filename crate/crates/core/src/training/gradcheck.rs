//! Central finite-difference verification of [`backward`].

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backward::{backward_with_fault, Fault};
use crate::error::{Error, Result};
use crate::model::{forward, init_params, loss_at_query, ModelConfig, ModelParams, QueryTarget};
use crate::rng::{self, Domain};
use crate::taskgen::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub step_size: f64,
}

impl Default for GradCheckConfig {
    /// The tiny configuration: `d_model = 8`, `seq_len = 6`, `vocab = 8`.
    fn default() -> Self {
        GradCheckConfig {
            model: ModelConfig {
                d_model: 8,
                seq_len: 6,
                vocab_size: 8,
                ..ModelConfig::default()
            },
            batch_size: 3,
            seed: 11,
            step_size: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorError {
    pub name: String,
    /// `|analytic - numeric|_2 / |numeric|_2` over the tensor.
    pub relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub passed: bool,
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub tensors: Vec<TensorError>,
}

/// Random tokens with the query at the second-to-last position.
fn probe_batch(cfg: &GradCheckConfig) -> (Vec<Vec<TokenId>>, Vec<QueryTarget>) {
    let mut rng = rng::stream(cfg.seed, Domain::Analysis, 0, 0);
    let (t, v) = (cfg.model.seq_len, cfg.model.vocab_size);
    let batch: Vec<Vec<TokenId>> = (0..cfg.batch_size)
        .map(|_| (0..t).map(|_| rng.random_range(0..v) as TokenId).collect())
        .collect();
    let pos = t.saturating_sub(2);
    let targets = batch.iter().map(|s| QueryTarget { pos, label: s[t - 1] }).collect();
    (batch, targets)
}

/// Compares backward against central differences for every parameter of
/// a freshly initialized model, optionally with an injected fault.
pub fn grad_check_with_fault(cfg: &GradCheckConfig, tolerance: f64, fault: Option<Fault>) -> Result<GradCheckReport> {
    cfg.model.validate()?;
    if cfg.model.param_count() > 10_000 {
        return Err(Error::config("model", "gradient check is limited to 10k parameters"));
    }
    if cfg.model.seq_len < 2 || cfg.batch_size == 0 {
        return Err(Error::config("model", "need seq_len >= 2 and a non-empty batch"));
    }
    let mut params: ModelParams<f64> = init_params(&cfg.model, cfg.seed)?;
    // move gains/biases off their trivial init values so their gradients
    // are exercised generically
    let mut rng = rng::stream(cfg.seed, Domain::Analysis, 1, 0);
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        if name.ends_with("ln_gain") || name.ends_with("ln_bias") {
            t.data.iter_mut().for_each(|x| *x += rng.random_range(-0.3..0.3));
        }
    }

    let (batch, targets) = probe_batch(cfg);
    let trace = forward(&params, &batch)?;
    let analytic = backward_with_fault(&params, &trace, &targets, fault);
    let h = cfg.step_size;
    let loss_at = |p: &ModelParams<f64>| -> Result<f64> { Ok(loss_at_query(&forward(p, &batch)?, &targets)) };

    let mut tensors = Vec::with_capacity(names.len());
    let analytic_tensors = analytic.named_tensors();
    for (ti, name) in names.iter().enumerate() {
        let n = analytic_tensors[ti].1.len();
        let mut diff2 = 0.0;
        let mut num2 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..n {
            let orig = params.tensors_mut()[ti].data[i];
            params.tensors_mut()[ti].data[i] = orig + h;
            let up = loss_at(&params)?;
            params.tensors_mut()[ti].data[i] = orig - h;
            let down = loss_at(&params)?;
            params.tensors_mut()[ti].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic_tensors[ti].1.data[i];
            diff2 += (a - numeric) * (a - numeric);
            num2 += numeric * numeric;
            max_abs = max_abs.max((a - numeric).abs());
        }
        let denom = libm::sqrt(num2).max(1e-12);
        tensors.push(TensorError {
            name: name.clone(),
            relative_error: libm::sqrt(diff2) / denom,
            max_abs_error: max_abs,
        });
    }
    let worst = tensors
        .iter()
        .max_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
        .expect("at least one tensor");
    Ok(GradCheckReport {
        passed: worst.relative_error < tolerance,
        tolerance,
        max_relative_error: worst.relative_error,
        worst_tensor: worst.name.clone(),
        tensors,
    })
}

pub fn grad_check(cfg: &GradCheckConfig, tolerance: f64) -> Result<GradCheckReport> {
    grad_check_with_fault(cfg, tolerance, None)
}
