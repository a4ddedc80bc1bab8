//! Gradients, optimization and the training loop.

mod adam;
mod backward;
mod gradcheck;
mod run;

pub use adam::{adam_step, OptimConfig, OptimState};
pub use backward::{backward, backward_with_fault, logit_gradient, Fault};
pub use gradcheck::{grad_check, grad_check_with_fault, GradCheckConfig, GradCheckReport, TensorError};
pub use run::{
    evaluate, AbortRecord, CheckpointSchedule, DataConfig, EvalConfig, LayerMetrics, MetricsRecord, RunConfig, RunError, TrainCheckpoint,
    TrainObserver, Trainer,
};
