use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
            weight_decay: 0.01,
            steps: 10_000,
            batch_size: 512,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and non-negative"));
        }
        if !(positive(self.beta1) && self.beta1 < 1.0) {
            return Err(Error::config("beta1", "must lie in (0, 1)"));
        }
        if !(positive(self.beta2) && self.beta2 < 1.0) {
            return Err(Error::config("beta2", "must lie in (0, 1)"));
        }
        if !positive(self.epsilon) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the number of updates taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct OptimState<F> {
    pub step: u64,
    pub first_moment: ModelParams<F>,
    pub second_moment: ModelParams<F>,
}

impl<F: Scalar> OptimState<F> {
    pub fn new(config: &ModelConfig) -> Self {
        OptimState {
            step: 0,
            first_moment: ModelParams::zeros(config),
            second_moment: ModelParams::zeros(config),
        }
    }
}

/// One Adam update with decoupled weight decay: parameters are first
/// scaled by `1 - lr * wd`, then moved by the bias-corrected moment ratio.
pub fn adam_step<F: Scalar>(params: &mut ModelParams<F>, grads: &ModelParams<F>, state: &mut OptimState<F>, config: &OptimConfig) {
    state.step += 1;
    let t = state.step as i32;
    let lr = F::of(config.learning_rate);
    let decay = F::of(1.0 - config.learning_rate * config.weight_decay);
    let (b1, b2) = (F::of(config.beta1), F::of(config.beta2));
    let (one_b1, one_b2) = (F::of(1.0 - config.beta1), F::of(1.0 - config.beta2));
    let c1 = F::of(1.0 - libm::pow(config.beta1, t as f64));
    let c2 = F::of(1.0 - libm::pow(config.beta2, t as f64));
    let eps = F::of(config.epsilon);

    let grads = grads.named_tensors();
    let ps = params.tensors_mut();
    let ms = state.first_moment.tensors_mut();
    let vs = state.second_moment.tensors_mut();
    for (((p, (_, g)), m), v) in ps.into_iter().zip(grads).zip(ms).zip(vs) {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + one_b1 * gi;
            v.data[i] = b2 * v.data[i] + one_b2 * gi * gi;
            let mhat = m.data[i] / c1;
            let vhat = v.data[i] / c2;
            p.data[i] = p.data[i] * decay - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
