use twohop_core::model::{init_params, ModelConfig, ModelParams};
use twohop_core::training::{
    adam_step, AbortRecord, CheckpointSchedule, EvalConfig, MetricsRecord, OptimConfig, OptimState, RunConfig,
    RunError, TrainCheckpoint, TrainObserver, Trainer,
};

#[derive(Default)]
struct Collect {
    records: Vec<MetricsRecord>,
    checkpoints: Vec<TrainCheckpoint<f32>>,
    aborts: Vec<AbortRecord>,
}

impl TrainObserver<f32> for Collect {
    type Error = std::convert::Infallible;

    fn on_eval(&mut self, record: &mut MetricsRecord) -> Result<(), Self::Error> {
        self.records.push(record.clone());
        Ok(())
    }

    fn on_checkpoint(&mut self, checkpoint: &TrainCheckpoint<f32>) -> Result<(), Self::Error> {
        self.checkpoints.push(checkpoint.clone());
        Ok(())
    }

    fn on_abort(&mut self, record: &AbortRecord) -> Result<(), Self::Error> {
        self.aborts.push(record.clone());
        Ok(())
    }
}

fn small(steps: usize) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 9,
        eval: EvalConfig { interval: 5, batch_size: 16 },
        checkpoints: CheckpointSchedule { steps: vec![0, 10], every: 0 },
        ..RunConfig::default()
    };
    cfg.model.d_model = 16;
    cfg.optimizer.batch_size = 8;
    cfg.optimizer.steps = steps;
    cfg
}

fn run(cfg: RunConfig) -> Collect {
    let mut obs = Collect::default();
    Trainer::<f32>::new(cfg).unwrap().run(&mut obs).unwrap();
    obs
}

#[test]
fn defaults_follow_the_reference_configuration() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.optimizer.learning_rate, 3e-4);
    assert_eq!((cfg.optimizer.beta1, cfg.optimizer.beta2), (0.9, 0.99));
    assert_eq!(cfg.optimizer.weight_decay, 0.01);
    assert_eq!(cfg.optimizer.steps, 10_000);
    assert_eq!((cfg.eval.interval, cfg.eval.batch_size), (50, 256));
    for s in [0, 800, 10_000] {
        assert!(cfg.checkpoints.contains(s, 10_000));
    }
    assert!(!cfg.checkpoints.contains(801, 10_000));
    assert!(cfg.checkpoints.contains(37, 37));
    assert_eq!(cfg.model.n_layers, 3);
    assert!(!cfg.model.use_mlp);
    cfg.validate().unwrap();
}

#[test]
fn zero_steps_emit_only_the_initial_state() {
    let obs = run(small(0));
    assert_eq!(obs.records.len(), 1);
    assert_eq!(obs.records[0].step, 0);
    assert_eq!(obs.checkpoints.len(), 1);
    assert_eq!(obs.checkpoints[0].step, 0);
    let r = &obs.records[0];
    assert!(r.train_loss > 0.0 && r.eval_loss > 0.0);
    assert_eq!(r.attention.len(), 3);
}

#[test]
fn eval_cadence_and_final_step() {
    let obs = run(small(12));
    let steps: Vec<usize> = obs.records.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 5, 10, 12]);
    let ck: Vec<usize> = obs.checkpoints.iter().map(|c| c.step).collect();
    assert_eq!(ck, vec![0, 10, 12]);
}

#[test]
fn runs_are_deterministic() {
    let a = run(small(10));
    let b = run(small(10));
    assert_eq!(a.records, b.records);
    assert_eq!(a.checkpoints.last().unwrap().params, b.checkpoints.last().unwrap().params);
    let mut other = small(10);
    other.seed += 1;
    assert_ne!(run(other).records, a.records);
}

#[test]
fn resume_is_exact() {
    let full = run(small(20));
    let mid = full.checkpoints.iter().find(|c| c.step == 10).unwrap().clone();
    let mut obs = Collect::default();
    let mut trainer = Trainer::<f32>::resume(small(20), mid).unwrap();
    assert_eq!(trainer.step(), 10);
    trainer.run(&mut obs).unwrap();
    assert_eq!(trainer.params(), &full.checkpoints.last().unwrap().params);
    let tail: Vec<&MetricsRecord> = full.records.iter().filter(|r| r.step > 10).collect();
    assert_eq!(obs.records.iter().collect::<Vec<_>>(), tail);
}

#[test]
fn resume_rejects_a_different_run() {
    let ck = run(small(0)).checkpoints.remove(0);
    let mut other = small(20);
    other.model.d_model = 32;
    assert!(Trainer::<f32>::resume(other, ck).is_err());
}

#[test]
fn non_finite_parameters_abort_the_run() {
    let mut ck = run(small(0)).checkpoints.remove(0);
    ck.params.readout.data[0] = f32::NAN;
    let mut obs = Collect::default();
    let err = Trainer::<f32>::resume(small(5), ck).unwrap().run(&mut obs).unwrap_err();
    assert!(matches!(err, RunError::Core(_)));
    assert_eq!(obs.aborts.len(), 1);
    assert_eq!(obs.aborts[0].step, 0);
    assert!(obs.aborts[0].value.is_nan());
}

#[test]
fn invalid_run_configs_are_rejected() {
    let mut cfg = small(5);
    cfg.eval.interval = 0;
    assert!(Trainer::<f32>::new(cfg).is_err());
    let mut cfg = small(5);
    cfg.model.vocab_size = 40;
    assert!(Trainer::<f32>::new(cfg).is_err());
    let mut cfg = small(5);
    cfg.model.seq_len = 24;
    assert!(Trainer::<f32>::new(cfg).is_err());
}

#[test]
fn adam_matches_a_scalar_reference() {
    let cfg = ModelConfig { d_model: 8, vocab_size: 4, seq_len: 3, n_layers: 1, ..ModelConfig::default() };
    let opt = OptimConfig::default();
    let mut params: ModelParams<f64> = init_params(&cfg, 0).unwrap();
    let start = params.readout.data[3];
    let mut state = OptimState::new(&cfg);
    let mut grads = ModelParams::<f64>::zeros(&cfg);
    let gs = [0.5, -0.25, 2.0];
    let (mut p, mut m, mut v) = (start, 0.0f64, 0.0f64);
    for (t, &g) in gs.iter().enumerate() {
        grads.readout.data[3] = g;
        adam_step(&mut params, &grads, &mut state, &opt);
        m = 0.9 * m + 0.1 * g;
        v = 0.99 * v + 0.01 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
        let vh = v / (1.0 - 0.99f64.powi(t as i32 + 1));
        p = p * (1.0 - 3e-4 * 0.01) - 3e-4 * mh / (vh.sqrt() + 1e-8);
        assert!((params.readout.data[3] - p).abs() < 1e-15);
    }
    // tensors with zero gradient only decay
    let untouched = params.readout.data[0];
    let fresh: ModelParams<f64> = init_params(&cfg, 0).unwrap();
    assert!((untouched - fresh.readout.data[0] * (1.0 - 3e-6f64).powi(3)).abs() < 1e-15);
}
