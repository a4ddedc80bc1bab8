//! Attention-only transformer: token and learned positional embeddings,
//! `n_layers` pre-norm blocks with one full-width attention head each
//! (optionally followed by a ReLU MLP), a final layer norm and an untied
//! linear readout.
//!
//! All matrices act on row vectors: `q = LN(x) · Q`, and the readout maps
//! `d_model -> vocab_size`.

mod forward;
pub(crate) mod ops;
mod reference;

pub use forward::{forward, loss_at_query, predict_probs, softmax_f64, ForwardTrace, LayerTrace, MlpTrace, QueryTarget};
pub use reference::reference_logits;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub use_mlp: bool,
    pub mlp_hidden: usize,
    pub layernorm_epsilon: f64,
    /// Standard deviation of the normal initialization of every matrix.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 3,
            n_heads: 1,
            d_model: 64,
            vocab_size: 25,
            seq_len: 23,
            use_mlp: false,
            mlp_hidden: 256,
            layernorm_epsilon: 1e-5,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::config("n_layers", "must be at least 1"));
        }
        if self.n_heads != 1 {
            return Err(Error::config("n_heads", "only a single head per layer is supported"));
        }
        if self.d_model < 8 {
            return Err(Error::config("d_model", "must be at least 8"));
        }
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size", "must be at least 2"));
        }
        if self.seq_len == 0 {
            return Err(Error::config("seq_len", "must be positive"));
        }
        if self.use_mlp && self.mlp_hidden == 0 {
            return Err(Error::config("mlp_hidden", "must be positive when the MLP is enabled"));
        }
        if !(self.layernorm_epsilon > 0.0 && self.layernorm_epsilon.is_finite()) {
            return Err(Error::config("layernorm_epsilon", "must be a small positive number"));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::config("init_std", "must be positive"));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (d, v, t) = (self.d_model, self.vocab_size, self.seq_len);
        let mlp = if self.use_mlp { 2 * d + 2 * d * self.mlp_hidden } else { 0 };
        v * d + t * d + self.n_layers * (4 * d * d + 2 * d + mlp) + 2 * d + d * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MlpParams<F> {
    pub ln_gain: Tensor<F>,
    pub ln_bias: Tensor<F>,
    /// `d_model x mlp_hidden`
    pub up: Tensor<F>,
    /// `mlp_hidden x d_model`
    pub down: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LayerParams<F> {
    pub ln_gain: Tensor<F>,
    pub ln_bias: Tensor<F>,
    pub query: Tensor<F>,
    pub key: Tensor<F>,
    pub value: Tensor<F>,
    pub output: Tensor<F>,
    pub mlp: Option<MlpParams<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub token_embedding: Tensor<F>,
    pub positional_embedding: Tensor<F>,
    pub layers: Vec<LayerParams<F>>,
    pub final_ln_gain: Tensor<F>,
    pub final_ln_bias: Tensor<F>,
    /// `d_model x vocab_size`
    pub readout: Tensor<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Parameters of the right shapes with every weight zero and every
    /// layer-norm gain one. Also used as the gradient / moment container.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let layer = || LayerParams {
            ln_gain: Tensor::zeros(&[d]),
            ln_bias: Tensor::zeros(&[d]),
            query: Tensor::zeros(&[d, d]),
            key: Tensor::zeros(&[d, d]),
            value: Tensor::zeros(&[d, d]),
            output: Tensor::zeros(&[d, d]),
            mlp: config.use_mlp.then(|| MlpParams {
                ln_gain: Tensor::zeros(&[d]),
                ln_bias: Tensor::zeros(&[d]),
                up: Tensor::zeros(&[d, config.mlp_hidden]),
                down: Tensor::zeros(&[config.mlp_hidden, d]),
            }),
        };
        ModelParams {
            config: config.clone(),
            token_embedding: Tensor::zeros(&[config.vocab_size, d]),
            positional_embedding: Tensor::zeros(&[config.seq_len, d]),
            layers: (0..config.n_layers).map(|_| layer()).collect(),
            final_ln_gain: Tensor::zeros(&[d]),
            final_ln_bias: Tensor::zeros(&[d]),
            readout: Tensor::zeros(&[d, config.vocab_size]),
        }
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        out.push((String::from("token_embedding"), &self.token_embedding));
        out.push((String::from("positional_embedding"), &self.positional_embedding));
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layers.{l}.ln_gain"), &layer.ln_gain));
            out.push((format!("layers.{l}.ln_bias"), &layer.ln_bias));
            out.push((format!("layers.{l}.query"), &layer.query));
            out.push((format!("layers.{l}.key"), &layer.key));
            out.push((format!("layers.{l}.value"), &layer.value));
            out.push((format!("layers.{l}.output"), &layer.output));
            if let Some(m) = &layer.mlp {
                out.push((format!("layers.{l}.mlp.ln_gain"), &m.ln_gain));
                out.push((format!("layers.{l}.mlp.ln_bias"), &m.ln_bias));
                out.push((format!("layers.{l}.mlp.up"), &m.up));
                out.push((format!("layers.{l}.mlp.down"), &m.down));
            }
        }
        out.push((String::from("final_ln_gain"), &self.final_ln_gain));
        out.push((String::from("final_ln_bias"), &self.final_ln_bias));
        out.push((String::from("readout"), &self.readout));
        out
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        out.push(&mut self.token_embedding);
        out.push(&mut self.positional_embedding);
        for layer in &mut self.layers {
            out.push(&mut layer.ln_gain);
            out.push(&mut layer.ln_bias);
            out.push(&mut layer.query);
            out.push(&mut layer.key);
            out.push(&mut layer.value);
            out.push(&mut layer.output);
            if let Some(m) = &mut layer.mlp {
                out.push(&mut m.ln_gain);
                out.push(&mut m.ln_bias);
                out.push(&mut m.up);
                out.push(&mut m.down);
            }
        }
        out.push(&mut self.final_ln_gain);
        out.push(&mut self.final_ln_bias);
        out.push(&mut self.readout);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Checks every tensor shape against the embedded config.
    pub fn check_shapes(&self) -> Result<()> {
        self.config.validate()?;
        let reference = ModelParams::<F>::zeros(&self.config);
        let mine = self.named_tensors();
        let want = reference.named_tensors();
        if mine.len() != want.len() {
            return Err(Error::Shape {
                context: "parameter tensor count",
                expected: want.len(),
                actual: mine.len(),
            });
        }
        for ((_, a), (_, b)) in mine.iter().zip(&want) {
            if a.shape != b.shape || a.data.len() != b.data.len() {
                return Err(Error::Shape {
                    context: "parameter tensor",
                    expected: b.data.len(),
                    actual: a.data.len(),
                });
            }
        }
        Ok(())
    }

    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let mut out = ModelParams::<G>::zeros(&self.config);
        for (dst, (_, src)) in out.tensors_mut().into_iter().zip(self.named_tensors()) {
            *dst = src.cast();
        }
        out
    }
}

fn is_gain(name: &str) -> bool {
    name.ends_with("ln_gain")
}

fn is_bias(name: &str) -> bool {
    name.ends_with("ln_bias")
}

/// Gaussian(0, `init_std`) weights, unit layer-norm gains, zero biases.
pub fn init_params_with<F: Scalar, R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<ModelParams<F>> {
    config.validate()?;
    let normal = Normal::new(0.0, config.init_std).expect("valid std");
    let mut params = ModelParams::<F>::zeros(config);
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        if is_gain(name) {
            t.fill(F::one());
        } else if !is_bias(name) {
            t.data.iter_mut().for_each(|x| *x = F::of(normal.sample(rng)));
        }
    }
    Ok(params)
}

/// Initialization from the run seed's dedicated stream.
pub fn init_params<F: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<F>> {
    init_params_with(config, &mut rng::stream(seed, Domain::Init, 0, 0))
}
