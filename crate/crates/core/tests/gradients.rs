use twohop_core::model::{forward, init_params, predict_probs, ModelConfig, ModelParams, QueryTarget};
use twohop_core::training::{backward, grad_check, grad_check_with_fault, logit_gradient, Fault, GradCheckConfig};

#[test]
fn backward_matches_central_differences() {
    let report = grad_check(&GradCheckConfig::default(), 1e-3).unwrap();
    assert!(report.passed, "worst {} at {:e}", report.worst_tensor, report.max_relative_error);
    assert_eq!(report.tensors.len(), 3 + 6 * 3 + 2);
}

#[test]
fn mlp_backward_matches_central_differences() {
    // seed chosen so no ReLU pre-activation sits within the step size of 0
    let cfg = GradCheckConfig {
        model: ModelConfig {
            use_mlp: true,
            mlp_hidden: 16,
            ..GradCheckConfig::default().model
        },
        seed: 13,
        ..GradCheckConfig::default()
    };
    let report = grad_check(&cfg, 1e-3).unwrap();
    assert!(report.passed, "worst {} at {:e}", report.worst_tensor, report.max_relative_error);
}

#[test]
fn injected_fault_is_reported_by_name() {
    for layer in 0..3 {
        let report = grad_check_with_fault(&GradCheckConfig::default(), 1e-3, Some(Fault::NegateValue { layer })).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst_tensor, format!("layers.{layer}.value"));
    }
}

#[test]
fn zero_tolerance_fails() {
    assert!(!grad_check(&GradCheckConfig::default(), 0.0).unwrap().passed);
}

#[test]
fn oversized_model_is_rejected() {
    let cfg = GradCheckConfig {
        model: ModelConfig::default(),
        ..GradCheckConfig::default()
    };
    assert!(grad_check(&cfg, 1e-3).is_err());
}

fn tiny() -> (ModelParams<f64>, Vec<Vec<u32>>, Vec<QueryTarget>) {
    let cfg = GradCheckConfig::default().model;
    let params = init_params(&cfg, 2).unwrap();
    let batch = vec![vec![0, 3, 4, 5, 6, 7], vec![0, 1, 2, 1, 2, 3]];
    let targets = batch.iter().map(|s| QueryTarget { pos: 4, label: s[5] }).collect();
    (params, batch, targets)
}

#[test]
fn logit_gradient_is_softmax_minus_onehot() {
    let (params, batch, targets) = tiny();
    let trace = forward(&params, &batch).unwrap();
    let g: Vec<f64> = logit_gradient(&trace, &targets);
    let (t, v) = (trace.seq_len, trace.vocab_size);
    for (b, tg) in targets.iter().enumerate() {
        let probs = predict_probs(&trace, b, tg.pos);
        for pos in 0..t {
            for j in 0..v {
                let got = g[(b * t + pos) * v + j];
                let want = if pos == tg.pos {
                    (probs[j] - if j == tg.label as usize { 1.0 } else { 0.0 }) / 2.0
                } else {
                    0.0
                };
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn positions_after_the_query_get_no_gradient() {
    let (params, batch, targets) = tiny();
    let trace = forward(&params, &batch).unwrap();
    let grads = backward(&params, &trace, &targets);
    let last = grads.positional_embedding.shape[0] - 1;
    assert!(grads.positional_embedding.row(last).iter().all(|&g| g == 0.0));
    assert!(grads.positional_embedding.row(last - 1).iter().any(|&g| g != 0.0));
}
