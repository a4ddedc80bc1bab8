//! Three-parameter trajectories as CSV and the dynamics comparison.

use std::path::Path;

use twohop_core::threeparam::{compare_dynamics, CompareConfig, HypothesisReport, ThreeParamHyper, Trajectory, TrajectoryPoint};
use twohop_core::training::MetricsRecord;

use crate::error::{LabError, Result};
use crate::io::{create_parent, read_jsonl, write_json};

/// Columns: step, alpha, beta, gamma, w1, w2, w3, loss.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    create_parent(path)?;
    let csv_err = |source| LabError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for p in &traj.points {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush().map_err(LabError::io(path))
}

/// Reads a trajectory CSV. The file carries no hyperparameters; the
/// returned trajectory reports the defaults with `steps` taken from the
/// last row.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let csv_err = |source| LabError::Csv {
        path: path.into(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let points = r
        .deserialize::<TrajectoryPoint>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(csv_err)?;
    if points.is_empty() {
        return Err(LabError::Usage(format!("{} holds no trajectory rows", path.display())));
    }
    let hyper = ThreeParamHyper {
        steps: points.last().map_or(0, |p| p.step),
        ..ThreeParamHyper::default()
    };
    Ok(Trajectory { hyper, points })
}

pub fn compare_files(trajectory: &Path, metrics: &Path, out: &Path, cfg: &CompareConfig) -> Result<HypothesisReport> {
    let traj = read_trajectory_csv(trajectory)?;
    let records: Vec<MetricsRecord> = read_jsonl(metrics)?;
    let report = compare_dynamics(&traj, &records, cfg);
    write_json(out, &report)?;
    Ok(report)
}
