use proptest::prelude::*;
use twohop_core::rng::{stream, Domain};
use twohop_core::taskgen::nl::{gen_nl_dataset, template, EntityPools, TEMPLATES};
use twohop_core::taskgen::{make_batch, validate_example, GenConfig, RoleKind, SymbolicExample, VocabSpec};

/// Slot (0-based, among the `2k` premises) of the target chain's first and
/// second premise.
fn target_slots(ex: &SymbolicExample) -> (usize, usize) {
    let slot = |kind| {
        (0..2 * ex.chain_count())
            .find(|&s| {
                let r = &ex.roles[1 + 2 * s];
                r.target && r.kind == kind
            })
            .unwrap()
    };
    (slot(RoleKind::Source), slot(RoleKind::Bridge))
}

fn chi_square(observed: &[usize], expected: &[f64]) -> f64 {
    observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum()
}

fn corpus(n: usize) -> Vec<SymbolicExample> {
    let cfg = GenConfig {
        seed: 2024,
        ..GenConfig::default()
    };
    make_batch(&cfg, Domain::Corpus, 0, n).unwrap()
}

#[test]
fn premise_precedence_holds_across_corpus() {
    let vocab = GenConfig::default().vocab();
    for ex in corpus(10_000) {
        assert_eq!(validate_example(&ex, &vocab), Ok(()));
        for chain in 0..5 {
            let pos = |kind| (1..21).step_by(2).find(|&p| ex.roles[p].chain == Some(chain) && ex.roles[p].kind == kind).unwrap();
            assert!(pos(RoleKind::Source) < pos(RoleKind::Bridge));
        }
    }
}

#[test]
fn target_premise_slots_are_uniform() {
    // the target's two slots form a uniform 2-subset of the 10 slots, so
    // the earlier one is at slot i with probability (9 - i) / 45 and the
    // later one at j with probability j / 45
    let examples = corpus(10_000);
    let n = examples.len() as f64;
    let mut first = [0usize; 9];
    let mut second = [0usize; 9];
    let mut target = [0usize; 5];
    for ex in &examples {
        let (f, s) = target_slots(ex);
        first[f] += 1;
        second[s - 1] += 1;
        target[ex.target_chain] += 1;
    }
    let e_first: Vec<f64> = (0..9).map(|i| n * (9 - i) as f64 / 45.0).collect();
    let e_second: Vec<f64> = (1..10).map(|j| n * j as f64 / 45.0).collect();
    // critical values at p = 0.01: 20.09 for 8 dof, 13.28 for 4 dof
    assert!(chi_square(&first, &e_first) < 20.09);
    assert!(chi_square(&second, &e_second) < 20.09);
    assert!(chi_square(&target, &[n / 5.0; 5]) < 13.28);
}

#[test]
fn nl_prompts_use_distinct_names() {
    let mut rng = stream(5, Domain::NaturalLanguage, 0, 0);
    let ids: Vec<&str> = TEMPLATES.iter().map(|t| t.id).collect();
    let pools = EntityPools::default();
    let data = gen_nl_dataset(&ids, &pools, 2, 1000, &mut rng).unwrap();
    assert_eq!(data.len(), 1000);
    let all: Vec<&String> = pools.names.iter().chain(&pools.locations).chain(&pools.biology).chain(&pools.languages).collect();
    for ex in &data {
        let mut found: Vec<&str> = ex.prompt.split(|c: char| !c.is_alphanumeric()).filter(|w| all.iter().any(|n| n == w)).collect();
        found.sort_unstable();
        found.dedup();
        assert_eq!(found.len(), 6, "{}", ex.prompt);
        assert!(template(&ex.template_id).is_some());
    }
}

#[test]
fn nl_prompts_reconstruct_their_template() {
    let mut rng = stream(6, Domain::NaturalLanguage, 0, 0);
    let pools = EntityPools::default();
    for t in &TEMPLATES {
        let ex = gen_nl_dataset(&[t.id], &pools, 3, 1, &mut rng).unwrap().remove(0);
        let mut masked = ex.prompt.clone();
        for pool in t.pools {
            for name in pools.get(pool) {
                masked = masked.replace(name.as_str(), "[X]");
            }
        }
        let premise = |s: &str| s.replace("{A}", "[X]").replace("{B}", "[X]").replace("{C}", "[X]");
        let (first, second) = (premise(t.first_premise), premise(t.second_premise));
        if first == second {
            assert_eq!(masked.matches(&first).count(), 6, "{masked}");
        } else {
            assert_eq!(masked.matches(&first).count(), 3, "{masked}");
            assert_eq!(masked.matches(&second).count(), 3, "{masked}");
        }
        assert!(masked.ends_with(&premise(t.conclusion)), "{masked}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_examples_are_valid(seed in any::<u64>(), k in 1usize..8, extra in 0usize..40, step in 0u64..1000) {
        let cfg = GenConfig { seed, chains_per_context: k, entity_count: 3 * k + extra, batch_size: 4 };
        let batch = make_batch(&cfg, Domain::Train, step, 4).unwrap();
        for ex in &batch {
            prop_assert_eq!(validate_example(ex, &cfg.vocab()), Ok(()));
            prop_assert_eq!(ex.tokens.len(), cfg.seq_len());
            prop_assert_eq!(ex.tokens[ex.query_pos + 1], ex.label);
        }
        prop_assert_eq!(make_batch(&cfg, Domain::Train, step, 4).unwrap(), batch);
    }

    #[test]
    fn undersized_vocabulary_is_rejected(k in 1usize..8, short in 1usize..3) {
        let cfg = GenConfig { seed: 0, chains_per_context: k, entity_count: 3 * k - short.min(3 * k - 1), batch_size: 1 };
        prop_assert!(make_batch(&cfg, Domain::Train, 0, 1).is_err());
    }

    #[test]
    fn corrupted_tokens_are_detected(seed in any::<u64>(), pos in 0usize..23) {
        let cfg = GenConfig { seed, ..GenConfig::default() };
        let mut ex = make_batch(&cfg, Domain::Train, 0, 1).unwrap().remove(0);
        // replace one occurrence of a repeated token with an entity foreign
        // to this context; tokens seen once can be renamed consistently
        let repeated: Vec<usize> = (0..23).filter(|&p| ex.tokens.iter().filter(|&&t| t == ex.tokens[p]).count() > 1).collect();
        let foreign = (1..=cfg.entity_count as u32).find(|t| !ex.tokens.contains(t)).unwrap();
        ex.tokens[repeated[pos % repeated.len()]] = foreign;
        prop_assert!(validate_example(&ex, &cfg.vocab()).is_err());
    }
}
