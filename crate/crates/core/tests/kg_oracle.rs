mod support;

use std::collections::BTreeSet;

use narrative_core::kg_distill::{build_dataset_from_edges, DistillConfig};
use narrative_core::rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use support::{oracle, parses, run, synthetic_kg};

#[test]
fn matches_brute_force_oracle() {
    for seed in 0..8 {
        let n_phrases = 40;
        let missing: BTreeSet<usize> = [3, 17].into();
        let edges = synthetic_kg(seed, 200, n_phrases);
        let p = parses(n_phrases, &missing);
        let want = oracle(&edges, &missing, n_phrases);
        assert!(!want.is_empty());
        assert!(want.iter().any(|r| r.0.starts_with("not ")), "fixture exercises negation");
        assert_eq!(run(&edges, &p), want, "seed {seed}");
    }
}

#[test]
fn stats_account_for_every_edge() {
    let missing: BTreeSet<usize> = [1, 2].into();
    let edges = synthetic_kg(9, 150, 30);
    let (ds, stats) = build_dataset_from_edges(&edges, &parses(30, &missing), &DistillConfig::default()).unwrap();
    assert_eq!(stats.edges, 150);
    let emitted = stats.edges - stats.edges_filtered - stats.edges_missing_parse - stats.edges_without_pairs;
    assert_eq!(ds.len(), emitted, "one pair per transitive phrase");
    assert_eq!(ds.class_counts.values().sum::<usize>(), ds.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_multiset_is_order_invariant(seed in 0u64..1000, shuffle in 0u64..1000) {
        let edges = synthetic_kg(seed, 120, 25);
        let p = parses(25, &BTreeSet::new());
        let mut shuffled = edges.clone();
        shuffled.shuffle(&mut rng::seeded(shuffle));
        let mut a = run(&edges, &p);
        let mut b = run(&shuffled, &p);
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}
