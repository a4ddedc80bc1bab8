use proptest::prelude::*;
use twohop_core::interp::{
    attention_logit_map, attention_summary, batch_category_probs, category_probs, detect_phase_transition,
    logit_lens_value_at, role_pair, spearman, PhaseThresholds, RolePair,
};
use twohop_core::model::{forward, init_params, ModelConfig, ModelParams};
use twohop_core::rng::Domain;
use twohop_core::taskgen::{make_batch, GenConfig, SymbolicExample};

fn setup(seed: u64, n: usize) -> (ModelParams<f64>, Vec<SymbolicExample>) {
    let params = init_params(&ModelConfig { d_model: 16, ..ModelConfig::default() }, seed).unwrap();
    let examples = make_batch(&GenConfig { seed, ..GenConfig::default() }, Domain::Analysis, 0, n).unwrap();
    (params, examples)
}

fn curve(values: &[f64], every: usize) -> Vec<(usize, f64)> {
    values.iter().enumerate().map(|(i, &v)| (i * every, v)).collect()
}

#[test]
fn step_curve_is_sharp() {
    let mut v = vec![0.2; 100];
    v[40..].iter_mut().for_each(|x| *x = 0.95);
    let t = detect_phase_transition(&curve(&v, 10), &PhaseThresholds::default()).unwrap();
    assert_eq!((t.t_start, t.t_mid, t.t_end), (390, 400, Some(400)));
    assert!((t.sharpness.unwrap() - 10.0 / 990.0).abs() < 1e-12);
}

#[test]
fn linear_ramp_is_not_sharp() {
    let v: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
    let t = detect_phase_transition(&curve(&v, 1), &PhaseThresholds::default()).unwrap();
    assert_eq!((t.t_start, t.t_mid, t.t_end), (24, 50, Some(86)));
    assert!(t.sharpness.unwrap() > 0.6);
}

#[test]
fn curves_that_never_rise_have_no_transition() {
    assert!(detect_phase_transition(&curve(&[0.2; 50], 1), &PhaseThresholds::default()).is_none());
    assert!(detect_phase_transition(&[], &PhaseThresholds::default()).is_none());
    // reaching the midpoint without the high level leaves the end open
    let t = detect_phase_transition(&curve(&[0.1, 0.6, 0.7], 1), &PhaseThresholds::default()).unwrap();
    assert_eq!((t.t_end, t.sharpness), (None, None));
}

#[test]
fn role_pairs_partition_the_causal_triangle() {
    let (_, examples) = setup(1, 16);
    for ex in &examples {
        let t = ex.tokens.len();
        let mut counts = [0usize; RolePair::ALL.len()];
        for q in 0..t {
            for k in 0..=q {
                counts[role_pair(ex, q, k).index()] += 1;
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), t * (t + 1) / 2);
        // the query sees each context child once, the target ones in their own bucket
        assert_eq!(counts[RolePair::QueryToTargetBridge.index()], 1);
        assert_eq!(counts[RolePair::QueryToTargetEnd.index()], 1);
        assert_eq!(counts[RolePair::QueryToOtherChild.index()], 8);
        assert_eq!(counts[RolePair::ChildToOwnParent.index()], 10);
        assert_eq!(counts[RolePair::LabelToAny.index()], t);
    }
}

#[test]
fn logit_maps_mask_future_keys() {
    let (params, examples) = setup(2, 2);
    let trace = forward(&params, &examples.iter().map(|e| &e.tokens).collect::<Vec<_>>()).unwrap();
    let map = attention_logit_map(&trace, 1, 1);
    for q in 0..23 {
        for k in 0..23 {
            assert_eq!(map.get(q, k).is_some(), k <= q);
        }
        assert!(map.argmax_row(q) <= q);
    }
}

#[test]
fn untrained_attention_is_diffuse() {
    let (params, examples) = setup(3, 32);
    let trace = forward(&params, &examples.iter().map(|e| &e.tokens).collect::<Vec<_>>()).unwrap();
    let summary = attention_summary(&trace, &examples);
    assert_eq!(summary.layers.len(), 3);
    for l in &summary.layers {
        assert!(l.child_parent_top1_fraction == 0.0);
        assert!(l.query_target_end_weight < 0.2);
        assert!(l.query_child_weight_cv < 0.5);
        let cells: usize = l.buckets.iter().map(|b| b.cells).sum();
        assert_eq!(cells, 32 * 23 * 24 / 2);
    }
}

#[test]
fn lens_of_a_silenced_head_is_the_final_bias_readout() {
    let (mut params, examples) = setup(4, 1);
    params.layers[2].output.data.iter_mut().for_each(|x| *x = 0.0);
    let trace = forward(&params, &[&examples[0].tokens]).unwrap();
    let lens = logit_lens_value_at(&params, &trace, 2, 0, 5);
    let (d, v) = (16, params.config.vocab_size);
    for j in 0..v {
        let want: f64 = (0..d).map(|i| params.final_ln_bias.data[i] * params.readout.data[i * v + j]).sum();
        assert!((lens[j] - want).abs() < 1e-12);
    }
}

#[test]
fn spearman_examples() {
    let a = [1.0, 2.0, 3.0, 4.0];
    assert!((spearman(&a, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert_eq!(spearman(&a, &[5.0; 4]), 0.0);
    // ties take the average rank: ranks (0, 1.5, 1.5, 3) against (0, 1, 2, 3)
    let r = spearman(&a, &[1.0, 2.0, 2.0, 3.0]);
    assert!((r - 4.5 / 4.5f64.sqrt() / 5.0f64.sqrt()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn category_probabilities_partition_the_mass(seed in any::<u64>()) {
        let (params, examples) = setup(seed, 4);
        let trace = forward(&params, &examples.iter().map(|e| &e.tokens).collect::<Vec<_>>()).unwrap();
        for (b, ex) in examples.iter().enumerate() {
            let c = category_probs(&trace, b, ex);
            prop_assert!(c.p_other >= -1e-12);
            prop_assert!((c.p_nontarget_end * 4.0 - c.p_nontarget_end_sum).abs() < 1e-12);
            let total = c.p_target_end + c.p_nontarget_end_sum + c.p_target_bridge + c.p_other;
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        let m = batch_category_probs(&trace, &examples);
        prop_assert!(m.p_target_end > 0.0 && m.p_target_end < 1.0);
    }

    #[test]
    fn phase_detector_orders_its_steps(values in prop::collection::vec(0.0f64..1.0, 1..60)) {
        if let Some(t) = detect_phase_transition(&curve(&values, 5), &PhaseThresholds::default()) {
            prop_assert!(t.t_start <= t.t_mid);
            if let Some(e) = t.t_end {
                prop_assert!(t.t_mid <= e);
                let s = t.sharpness.unwrap();
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }
    }
}
