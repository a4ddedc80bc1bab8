//! The online training loop: a fresh batch every step, periodic evaluation
//! on a frozen held-out batch, and checkpoints on a schedule.
//!
//! The loop performs no IO; a [`TrainObserver`] receives metrics records
//! and checkpoints.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, OptimConfig, OptimState};
use super::backward::backward;
use crate::error::{Error, Result};
use crate::interp::{attention_summary, batch_category_probs};
use crate::model::{forward, init_params, loss_at_query, ModelConfig, ModelParams, QueryTarget};
use crate::rng::Domain;
use crate::scalar::Scalar;
use crate::taskgen::{make_batch, GenConfig, SymbolicExample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub chains_per_context: usize,
    pub entity_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            chains_per_context: 5,
            entity_count: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub interval: usize,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            interval: 50,
            batch_size: 256,
        }
    }
}

/// Steps at which checkpoints are emitted. The final step is always
/// checkpointed as well.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointSchedule {
    pub steps: Vec<usize>,
    /// Additionally checkpoint every `every` steps when non-zero.
    pub every: usize,
}

impl Default for CheckpointSchedule {
    fn default() -> Self {
        CheckpointSchedule {
            steps: vec![0, 800, 10_000],
            every: 0,
        }
    }
}

impl CheckpointSchedule {
    pub fn contains(&self, step: usize, final_step: usize) -> bool {
        step == final_step || self.steps.contains(&step) || (self.every > 0 && step % self.every == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub optimizer: OptimConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub checkpoints: CheckpointSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            optimizer: OptimConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            checkpoints: CheckpointSchedule::default(),
        }
    }
}

impl RunConfig {
    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            seed: self.seed,
            chains_per_context: self.data.chains_per_context,
            entity_count: self.data.entity_count,
            batch_size: self.optimizer.batch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        self.gen_config().validate()?;
        if self.model.seq_len != self.gen_config().seq_len() {
            return Err(Error::config("model.seq_len", "must equal 4 * chains_per_context + 3"));
        }
        if self.model.vocab_size != self.gen_config().vocab().size() {
            return Err(Error::config("model.vocab_size", "must equal entity_count + 1"));
        }
        if self.eval.interval == 0 || self.eval.batch_size == 0 {
            return Err(Error::config("eval", "interval and batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub layer: usize,
    pub chessboard_score: f64,
    pub child_parent_weight: f64,
    pub query_target_bridge_weight: f64,
    pub query_target_end_weight: f64,
    pub query_child_weight_cv: f64,
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    /// Mean training loss over the steps since the previous record (the
    /// loss of the first batch at step 0).
    pub train_loss: f64,
    pub eval_loss: f64,
    pub p_target_end: f64,
    pub p_nontarget_end: f64,
    pub p_target_bridge: f64,
    pub attention: Vec<LayerMetrics>,
    /// Filled in by the observer; the core loop has no clock.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub step: usize,
    pub what: String,
    pub value: f64,
}

use alloc::string::String;

/// Full resumable training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TrainCheckpoint<F> {
    pub step: usize,
    pub config: RunConfig,
    pub params: ModelParams<F>,
    pub optimizer: OptimState<F>,
    pub loss_sum: f64,
    pub loss_count: usize,
}

pub trait TrainObserver<F> {
    type Error;

    fn on_eval(&mut self, record: &mut MetricsRecord) -> core::result::Result<(), Self::Error>;

    fn on_checkpoint(&mut self, checkpoint: &TrainCheckpoint<F>) -> core::result::Result<(), Self::Error>;

    fn on_abort(&mut self, _record: &AbortRecord) -> core::result::Result<(), Self::Error> {
        Ok(())
    }
}

#[derive(Debug)]
pub enum RunError<E> {
    Core(Error),
    Observer(E),
}

impl<E> From<Error> for RunError<E> {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl<E: core::fmt::Display> core::fmt::Display for RunError<E> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Observer(e) => write!(f, "{e}"),
        }
    }
}

/// Evaluates `params` on `examples`, producing a record with
/// `train_loss` left at zero.
pub fn evaluate<F: Scalar>(params: &ModelParams<F>, examples: &[SymbolicExample], step: usize) -> Result<MetricsRecord> {
    let batch: Vec<&[u32]> = examples.iter().map(|e| e.tokens.as_slice()).collect();
    let trace = forward(params, &batch)?;
    let targets: Vec<QueryTarget> = examples.iter().map(QueryTarget::from).collect();
    let probs = batch_category_probs(&trace, examples);
    let summary = attention_summary(&trace, examples);
    Ok(MetricsRecord {
        step,
        train_loss: 0.0,
        eval_loss: loss_at_query(&trace, &targets),
        p_target_end: probs.p_target_end,
        p_nontarget_end: probs.p_nontarget_end,
        p_target_bridge: probs.p_target_bridge,
        attention: summary
            .layers
            .iter()
            .map(|l| LayerMetrics {
                layer: l.layer,
                chessboard_score: l.chessboard_score,
                child_parent_weight: l.child_parent_weight,
                query_target_bridge_weight: l.query_target_bridge_weight,
                query_target_end_weight: l.query_target_end_weight,
                query_child_weight_cv: l.query_child_weight_cv,
            })
            .collect(),
        wall_time: 0.0,
    })
}

pub struct Trainer<F> {
    config: RunConfig,
    params: ModelParams<F>,
    optimizer: OptimState<F>,
    step: usize,
    loss_sum: f64,
    loss_count: usize,
    eval_batch: Vec<SymbolicExample>,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config.model, config.seed)?;
        Self::build(config, params, None, 0, 0.0, 0)
    }

    /// Continues from a checkpoint. `config` may extend `optimizer.steps`
    /// or change the schedule; everything else must match.
    pub fn resume(config: RunConfig, ckpt: TrainCheckpoint<F>) -> Result<Self> {
        config.validate()?;
        ckpt.params.check_shapes()?;
        let mut same = config.clone();
        same.optimizer.steps = ckpt.config.optimizer.steps;
        same.checkpoints = ckpt.config.checkpoints.clone();
        if same != ckpt.config {
            return Err(Error::config("resume", "run configuration differs from the checkpoint's"));
        }
        Self::build(config, ckpt.params, Some(ckpt.optimizer), ckpt.step, ckpt.loss_sum, ckpt.loss_count)
    }

    fn build(
        config: RunConfig,
        params: ModelParams<F>,
        optimizer: Option<OptimState<F>>,
        step: usize,
        loss_sum: f64,
        loss_count: usize,
    ) -> Result<Self> {
        let eval_batch = make_batch(&config.gen_config(), Domain::Eval, 0, config.eval.batch_size)?;
        let optimizer = optimizer.unwrap_or_else(|| OptimState::new(&config.model));
        Ok(Trainer {
            config,
            params,
            optimizer,
            step,
            loss_sum,
            loss_count,
            eval_batch,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn params(&self) -> &ModelParams<F> {
        &self.params
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn eval_batch(&self) -> &[SymbolicExample] {
        &self.eval_batch
    }

    fn batch_loss(&self, step: usize) -> Result<(Vec<SymbolicExample>, f64)> {
        let batch = make_batch(&self.config.gen_config(), Domain::Train, step as u64, self.config.optimizer.batch_size)?;
        let tokens: Vec<&[u32]> = batch.iter().map(|e| e.tokens.as_slice()).collect();
        let trace = forward(&self.params, &tokens)?;
        let targets: Vec<QueryTarget> = batch.iter().map(QueryTarget::from).collect();
        Ok((batch, loss_at_query(&trace, &targets)))
    }

    /// One optimizer update on the batch for the current step. Returns the
    /// pre-update batch loss.
    pub fn train_step(&mut self) -> Result<f64> {
        let batch = make_batch(&self.config.gen_config(), Domain::Train, self.step as u64, self.config.optimizer.batch_size)?;
        let tokens: Vec<&[u32]> = batch.iter().map(|e| e.tokens.as_slice()).collect();
        let targets: Vec<QueryTarget> = batch.iter().map(QueryTarget::from).collect();
        let trace = forward(&self.params, &tokens)?;
        let loss = loss_at_query(&trace, &targets);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "training loss",
                step: self.step,
                value: loss,
            });
        }
        let grads = backward(&self.params, &trace, &targets);
        drop(trace);
        adam_step(&mut self.params, &grads, &mut self.optimizer, &self.config.optimizer);
        if !self.params.all_finite() {
            return Err(Error::NonFinite {
                what: "parameter",
                step: self.step,
                value: f64::NAN,
            });
        }
        self.step += 1;
        self.loss_sum += loss;
        self.loss_count += 1;
        Ok(loss)
    }

    pub fn evaluate(&mut self) -> Result<MetricsRecord> {
        let mut record = evaluate(&self.params, &self.eval_batch, self.step)?;
        record.train_loss = if self.loss_count == 0 {
            self.batch_loss(self.step)?.1
        } else {
            self.loss_sum / self.loss_count as f64
        };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        Ok(record)
    }

    pub fn checkpoint(&self) -> TrainCheckpoint<F> {
        TrainCheckpoint {
            step: self.step,
            config: self.config.clone(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            loss_sum: self.loss_sum,
            loss_count: self.loss_count,
        }
    }

    fn is_eval_step(&self) -> bool {
        self.step % self.config.eval.interval == 0 || self.step == self.config.optimizer.steps
    }

    /// Trains up to `optimizer.steps`, reporting to `observer`. A fresh run
    /// emits the step-0 record and checkpoint first.
    pub fn run<O: TrainObserver<F>>(&mut self, observer: &mut O) -> core::result::Result<(), RunError<O::Error>> {
        let last = self.config.optimizer.steps;
        if self.step == 0 {
            self.emit(observer, last)?;
        }
        while self.step < last {
            if let Err(e) = self.train_step() {
                if let Error::NonFinite { what, step, value } = &e {
                    let record = AbortRecord {
                        step: *step,
                        what: String::from(*what),
                        value: *value,
                    };
                    observer.on_abort(&record).map_err(RunError::Observer)?;
                }
                return Err(e.into());
            }
            self.emit(observer, last)?;
        }
        Ok(())
    }

    fn emit<O: TrainObserver<F>>(&mut self, observer: &mut O, last: usize) -> core::result::Result<(), RunError<O::Error>> {
        if self.is_eval_step() {
            let mut record = self.evaluate()?;
            observer.on_eval(&mut record).map_err(RunError::Observer)?;
        }
        if self.config.checkpoints.contains(self.step, last) {
            observer.on_checkpoint(&self.checkpoint()).map_err(RunError::Observer)?;
        }
        Ok(())
    }
}
