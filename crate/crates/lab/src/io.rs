//! JSON, JSON-lines and checkpoint files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use twohop_core::taskgen::{validate_example, SymbolicExample, VocabSpec};
use twohop_core::training::TrainCheckpoint;

use crate::error::{LabError, Result};

pub fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(LabError::io(p)),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| LabError::Json {
        path: path.into(),
        source,
    })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(LabError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(LabError::io(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| LabError::Json {
        path: path.into(),
        source,
    })
}

/// Line-oriented writer; every record is flushed so a crashed run keeps
/// its stream up to the last record.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self> {
        create_parent(path)?;
        let file = File::create(path).map_err(LabError::io(path))?;
        Ok(JsonlWriter {
            path: path.into(),
            out: BufWriter::new(file),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record).map_err(|source| LabError::Json {
            path: self.path.clone(),
            source,
        })?;
        self.out.write_all(b"\n").map_err(LabError::io(&self.path))?;
        self.out.flush().map_err(LabError::io(&self.path))
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = JsonlWriter::create(path)?;
    records.iter().try_for_each(|r| w.write(r))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(LabError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(LabError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LabError::JsonLine {
            path: path.into(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Reads a symbolic dataset and checks every example against the
/// generator's structural rules.
pub fn read_symbolic_dataset(path: &Path, vocab: &VocabSpec) -> Result<Vec<SymbolicExample>> {
    let examples: Vec<SymbolicExample> = read_jsonl(path)?;
    for (index, ex) in examples.iter().enumerate() {
        validate_example(ex, vocab).map_err(|v| LabError::InvalidExample {
            path: path.into(),
            index,
            violation: v.name().to_string(),
        })?;
    }
    Ok(examples)
}

pub fn save_checkpoint(path: &Path, ckpt: &TrainCheckpoint<f32>) -> Result<()> {
    create_parent(path)?;
    let bytes = serde_json::to_vec(ckpt).map_err(|source| LabError::Json {
        path: path.into(),
        source,
    })?;
    fs::write(path, bytes).map_err(LabError::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainCheckpoint<f32>> {
    let ckpt: TrainCheckpoint<f32> = read_json(path)?;
    ckpt.params.check_shapes()?;
    Ok(ckpt)
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("step_{step:06}.json")
}
