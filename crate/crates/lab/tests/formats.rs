use std::fs;

use tempfile::TempDir;
use twohop_core::model::init_params;
use twohop_core::training::{OptimState, RunConfig, TrainCheckpoint};
use twohop_lab::analysis::export_heatmap;
use twohop_lab::io::{load_checkpoint, read_jsonl, save_checkpoint, write_jsonl};
use twohop_lab::LabError;

#[test]
fn identity_heatmap_round_trips_through_csv() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("id.csv");
    let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let entries: Vec<Option<f64>> = (0..9).map(|i| Some(if i % 4 == 0 { 1.0 } else { 0.0 })).collect();
    export_heatmap(&path, &labels, &labels, &entries).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), ",a,b,c\na,1,0,0\nb,0,1,0\nc,0,0,1\n");
}

#[test]
fn masked_cells_are_empty() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("mask.csv");
    let labels: Vec<String> = ["q0", "q1"].iter().map(|s| s.to_string()).collect();
    export_heatmap(&path, &labels, &labels, &[Some(0.5), None, Some(-1.25), Some(2.0)]).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), ",q0,q1\nq0,0.5,\nq1,-1.25,2\n");
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("ck.json");
    let config = RunConfig::default();
    let mut params = init_params::<f32>(&config.model, 3).unwrap();
    // values whose shortest decimal form needs all digits
    params.readout.data[0] = f32::from_bits(0x3e4c_cccd);
    params.readout.data[1] = f32::MIN_POSITIVE;
    params.readout.data[2] = -0.0;
    let ckpt = TrainCheckpoint {
        step: 7,
        optimizer: OptimState::new(&config.model),
        config,
        params,
        loss_sum: 0.1 + 0.2,
        loss_count: 3,
    };
    save_checkpoint(&path, &ckpt).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.step, 7);
    assert_eq!(back.loss_sum.to_bits(), ckpt.loss_sum.to_bits());
    for ((_, a), (_, b)) in ckpt.params.named_tensors().iter().zip(back.params.named_tensors()) {
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn checkpoint_with_wrong_shapes_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("ck.json");
    let config = RunConfig::default();
    let mut ckpt = TrainCheckpoint {
        step: 0,
        optimizer: OptimState::new(&config.model),
        params: init_params::<f32>(&config.model, 0).unwrap(),
        config,
        loss_sum: 0.0,
        loss_count: 0,
    };
    ckpt.params.readout.data.pop();
    save_checkpoint(&path, &ckpt).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn jsonl_reports_the_bad_line() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("x.jsonl");
    write_jsonl(&path, &[1u32, 2, 3]).unwrap();
    assert_eq!(read_jsonl::<u32>(&path).unwrap(), vec![1, 2, 3]);
    fs::write(&path, "1\n2\nnope\n").unwrap();
    match read_jsonl::<u32>(&path) {
        Err(LabError::JsonLine { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}
