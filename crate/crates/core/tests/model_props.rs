use proptest::prelude::*;
use twohop_core::model::{forward, init_params, loss_at_query, predict_probs, ModelConfig, ModelParams, QueryTarget};

fn small() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        vocab_size: 12,
        seq_len: 9,
        ..ModelConfig::default()
    }
}

fn tokens(v: usize, t: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0..v as u32, t)
}

#[test]
fn default_parameter_count_matches_shapes() {
    let (v, t, d, l) = (65, 23, 64, 3);
    let per_layer = 4 * d * d + 2 * d;
    let expected = v * d + t * d + l * per_layer + 2 * d + d * v;
    assert_eq!(expected, 59_456);
    let cfg = ModelConfig { vocab_size: v, ..ModelConfig::default() };
    assert_eq!(cfg.param_count(), expected);
    let p: ModelParams<f32> = init_params(&cfg, 0).unwrap();
    assert_eq!(p.param_count(), expected);
}

#[test]
fn untrained_model_is_near_uniform() {
    let cfg = ModelConfig::default();
    let p: ModelParams<f64> = init_params(&cfg, 1).unwrap();
    let v = cfg.vocab_size;
    let seq: Vec<u32> = (0..23).map(|i| (i * 7 % v) as u32).collect();
    let trace = forward(&p, &[seq]).unwrap();
    let probs = predict_probs(&trace, 0, 21);
    let max = probs.iter().cloned().fold(0.0, f64::max);
    let uniform = 1.0 / v as f64;
    assert!(max < 10.0 * uniform && max > uniform);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        ModelConfig { n_layers: 0, ..ModelConfig::default() },
        ModelConfig { d_model: 4, ..ModelConfig::default() },
        ModelConfig { init_std: 0.0, ..ModelConfig::default() },
    ] {
        assert!(cfg.validate().is_err());
    }
    let p: ModelParams<f64> = init_params(&small(), 0).unwrap();
    assert!(forward(&p, &[vec![0u32; 10]]).is_err());
    assert!(forward(&p, &[vec![12u32; 9]]).is_err());
}

#[test]
fn loss_of_uniform_guess_over_five() {
    // a probability of 0.2 on the label costs ln 5
    assert!(((-0.2f64.ln()) - 1.609).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn attention_rows_are_distributions(seed in any::<u64>(), seq in tokens(12, 9)) {
        let p: ModelParams<f64> = init_params(&small(), seed).unwrap();
        let trace = forward(&p, &[seq]).unwrap();
        for layer in 0..3 {
            for q in 0..9 {
                let row = trace.weights_row(layer, 0, q);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&w| w >= 0.0));
                prop_assert!(row[q + 1..].iter().all(|&w| w == 0.0));
            }
        }
    }

    #[test]
    fn future_tokens_do_not_change_the_past(seed in any::<u64>(), seq in tokens(12, 9), cut in 0usize..8, tok in 0u32..12) {
        let p: ModelParams<f64> = init_params(&small(), seed).unwrap();
        let mut other = seq.clone();
        other[cut + 1] = tok;
        let a = forward(&p, &[seq]).unwrap();
        let b = forward(&p, &[other]).unwrap();
        for pos in 0..=cut {
            prop_assert_eq!(a.logits_at(0, pos), b.logits_at(0, pos));
        }
    }

    #[test]
    fn batch_order_is_irrelevant(seed in any::<u64>(), x in tokens(12, 9), y in tokens(12, 9), z in tokens(12, 9)) {
        let p: ModelParams<f64> = init_params(&small(), seed).unwrap();
        let fwd = forward(&p, &[x.clone(), y.clone(), z.clone()]).unwrap();
        let rev = forward(&p, &[z, y, x]).unwrap();
        for b in 0..3 {
            for pos in 0..9 {
                let (u, v) = (fwd.logits_at(b, pos), rev.logits_at(2 - b, pos));
                prop_assert!(u.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), seq in tokens(12, 9)) {
        let p: ModelParams<f32> = init_params(&small(), seed).unwrap();
        let targets = [QueryTarget { pos: 7, label: seq[8] }];
        let a = forward(&p, &[seq.clone()]).unwrap();
        let b = forward(&p, &[seq]).unwrap();
        prop_assert_eq!(&a.logits, &b.logits);
        prop_assert_eq!(loss_at_query(&a, &targets).to_bits(), loss_at_query(&b, &targets).to_bits());
    }
}
