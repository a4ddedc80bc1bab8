//! Training runs on disk: manifest, metrics stream and checkpoints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use twohop_core::training::{AbortRecord, MetricsRecord, RunConfig, RunError, TrainCheckpoint, TrainObserver, Trainer};

use crate::error::{LabError, Result};
use crate::io::{checkpoint_file_name, load_checkpoint, save_checkpoint, write_json, JsonlWriter};
use crate::manifest::{create_output_dir, RunManifest};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const ABORT_FILE: &str = "abort.json";

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub config: RunConfig,
    pub out: PathBuf,
    /// Checkpoint to continue from; the new run directory holds only the
    /// records after the checkpoint's step.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub metrics: Vec<MetricsRecord>,
    pub checkpoints: Vec<(usize, PathBuf)>,
}

struct FileObserver<'a> {
    dir: &'a Path,
    metrics: JsonlWriter,
    records: Vec<MetricsRecord>,
    checkpoints: Vec<(usize, PathBuf)>,
    manifest: &'a mut RunManifest,
    start: Instant,
}

impl TrainObserver<f32> for FileObserver<'_> {
    type Error = LabError;

    fn on_eval(&mut self, record: &mut MetricsRecord) -> Result<()> {
        record.wall_time = self.start.elapsed().as_secs_f64();
        self.metrics.write(record)?;
        self.records.push(record.clone());
        Ok(())
    }

    fn on_checkpoint(&mut self, ckpt: &TrainCheckpoint<f32>) -> Result<()> {
        let rel = format!("{CHECKPOINT_DIR}/{}", checkpoint_file_name(ckpt.step));
        let path = self.dir.join(&rel);
        save_checkpoint(&path, ckpt)?;
        self.manifest.record(rel);
        self.manifest.save(self.dir)?;
        self.checkpoints.push((ckpt.step, path));
        Ok(())
    }

    fn on_abort(&mut self, record: &AbortRecord) -> Result<()> {
        write_json(&self.dir.join(ABORT_FILE), record)?;
        self.manifest.record(ABORT_FILE);
        self.manifest.save(self.dir)
    }
}

pub fn train_run(opts: &TrainOptions) -> Result<TrainOutcome> {
    opts.config.validate()?;
    let resumed = match &opts.resume {
        Some(path) if !path.is_file() => {
            return Err(LabError::Usage(format!("resume checkpoint {} does not exist", path.display())));
        }
        Some(path) => Some(load_checkpoint(path)?),
        None => None,
    };
    let mut trainer = match resumed {
        Some(ckpt) => Trainer::<f32>::resume(opts.config.clone(), ckpt)?,
        None => Trainer::<f32>::new(opts.config.clone())?,
    };

    let dir = opts.out.as_path();
    create_output_dir(dir)?;
    let mut manifest = RunManifest::new("train", &opts.config, opts.config.seed);
    manifest.resumed_from = opts.resume.clone();
    manifest.record(CONFIG_FILE);
    manifest.record(METRICS_FILE);
    manifest.save(dir)?;
    write_json(&dir.join(CONFIG_FILE), &opts.config)?;

    let mut observer = FileObserver {
        dir,
        metrics: JsonlWriter::create(&dir.join(METRICS_FILE))?,
        records: Vec::new(),
        checkpoints: Vec::new(),
        manifest: &mut manifest,
        start: Instant::now(),
    };
    let result = trainer.run(&mut observer);
    let (records, checkpoints) = (observer.records, observer.checkpoints);
    manifest.finish(dir)?;
    match result {
        Ok(()) => Ok(TrainOutcome {
            run_dir: dir.into(),
            metrics: records,
            checkpoints,
        }),
        Err(RunError::Core(e)) => Err(e.into()),
        Err(RunError::Observer(e)) => Err(e),
    }
}

/// Path of the checkpoint for `step` inside a run directory.
pub fn checkpoint_path(run_dir: &Path, step: usize) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(checkpoint_file_name(step))
}
