mod common;

use common::dirichlet_expected_entropy;
use uneven::corpus::{
    allocate_budget, count_labels, generate_synthetic_pool, BudgetPlan, SelectionStrategy, SyntheticConfig,
    RESERVOIR_SIZE,
};
use uneven::metrics::{entropy, mean_std};

/// Mean true-distribution entropy against the closed form
/// `E[H] = psi(a0 + 1) - sum_i a_i / a0 * psi(a_i + 1)` mixed over the
/// ambiguity flag.
#[test]
fn true_entropy_matches_dirichlet_expectation() {
    for (ambiguous, sharp, flat) in [(0.5, 30.0, 0.5), (0.2, 8.0, 0.1), (1.0, 30.0, 2.0)] {
        let cfg = SyntheticConfig {
            n_examples: 20_000,
            ambiguous_fraction: ambiguous,
            dirichlet_sharp: sharp,
            dirichlet_flat: flat,
            seed: 11,
            ..Default::default()
        };
        let pool = generate_synthetic_pool(&cfg).unwrap();
        let hs: Vec<f64> = pool.iter().map(|e| entropy(e.true_dist.as_ref().unwrap().probs())).collect();
        let (mean, std) = mean_std(&hs);
        let expected = ambiguous * dirichlet_expected_entropy(&cfg.concentration(0, true))
            + (1.0 - ambiguous) * dirichlet_expected_entropy(&cfg.concentration(0, false));
        let se = std / (hs.len() as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "{ambiguous}/{sharp}/{flat}: {mean} vs {expected} (se {se})");
    }
}

#[test]
fn ambiguous_examples_have_higher_entropy() {
    let pool = generate_synthetic_pool(&SyntheticConfig { n_examples: 4000, seed: 3, ..Default::default() }).unwrap();
    let cfg = SyntheticConfig::default();
    let flat = dirichlet_expected_entropy(&cfg.concentration(0, true));
    let sharp = dirichlet_expected_entropy(&cfg.concentration(0, false));
    assert!(flat > sharp + 0.3);
    let hs: Vec<f64> = pool.iter().map(|e| entropy(e.true_dist.as_ref().unwrap().probs())).collect();
    let mean = hs.iter().sum::<f64>() / hs.len() as f64;
    assert!(mean > sharp && mean < flat);
}

#[test]
fn full_reservoir_subsample_equals_counter() {
    let pool = generate_synthetic_pool(&SyntheticConfig { n_examples: 300, seed: 5, ..Default::default() }).unwrap();
    let plan = BudgetPlan::new(0, 50, RESERVOIR_SIZE, 0);
    let split = allocate_budget(&pool, &plan, 1).unwrap();
    for m in &split.multis {
        let counts = count_labels(&m.annotations, 3);
        assert_eq!(Some(&counts), m.label_counter.as_ref(), "{}", m.uid);
    }
}

#[test]
fn entropy_selection_orders_multis() {
    let pool = generate_synthetic_pool(&SyntheticConfig { n_examples: 2000, seed: 6, ..Default::default() }).unwrap();
    let mean_h = |s: SelectionStrategy| {
        let plan = BudgetPlan::new(100, 100, 10, 0).with_selection(s);
        let split = allocate_budget(&pool, &plan, 2).unwrap();
        let hs: Vec<f64> = split
            .multis
            .iter()
            .map(|e| entropy(e.reference_distribution(3).unwrap().probs()))
            .collect();
        hs.iter().sum::<f64>() / hs.len() as f64
    };
    let (low, random, high) =
        (mean_h(SelectionStrategy::LowEntropy), mean_h(SelectionStrategy::Random), mean_h(SelectionStrategy::HighEntropy));
    assert!(low < random && random < high, "{low} {random} {high}");
}
