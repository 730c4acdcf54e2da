//! Corpus data model: label vocabularies, label distributions, annotated
//! examples, annotation aggregation, budget allocation and file I/O.

mod budget;
mod io;
mod synthetic;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use budget::{allocate_budget, BudgetPlan, CorpusSplit, SelectionStrategy};
pub use io::{load_corpus, load_vocab, parse_corpus, save_corpus, save_vocab, write_corpus};
pub use synthetic::{generate_synthetic_pool, generate_synthetic_pool_with, SyntheticConfig, RESERVOIR_SIZE};

/// Ordered set of label names. The order is the canonical tie-break order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidVocab("vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidVocab(format!("label {i} has an empty name")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidVocab(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// The three-way NLI vocabulary: entailment, neutral, contradiction.
    pub fn nli() -> Self {
        Self::new(["e", "n", "c"]).expect("static vocab")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// Tolerance on the total mass of a [`LabelDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Probability vector aligned to a [`LabelVocab`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!("entry {i} = {p} outside [0, 1]")));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    pub fn one_hot(k: usize, label: usize) -> Self {
        assert!(label < k, "label {label} out of range for {k} classes");
        let mut probs = vec![0.0; k];
        probs[label] = 1.0;
        Self(probs)
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Self(vec![1.0 / k as f64; k])
    }

    /// Normalizes non-negative counts into a distribution.
    pub fn from_counts(counts: &[u32]) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total == 0 {
            return Err(Error::EmptyAnnotations);
        }
        Ok(Self(counts.iter().map(|&c| c as f64 / total as f64).collect()))
    }

    /// Wraps values the caller has already normalized.
    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|p| p.is_finite() && *p >= -1e-12));
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LabelDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelDistribution> for Vec<f64> {
    fn from(d: LabelDistribution) -> Self {
        d.0
    }
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One training or evaluation example.
///
/// `annotations` is the multiset of label indices visible to training; its
/// length is the example's label cost. Synthetic and evaluation examples also
/// carry `true_dist`, `old_label` and a dense `label_counter` aligned to the
/// vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedExample {
    pub uid: String,
    pub features: Vec<f64>,
    pub annotations: Vec<usize>,
    pub true_dist: Option<LabelDistribution>,
    pub old_label: Option<usize>,
    pub label_counter: Option<Vec<u32>>,
}

impl AnnotatedExample {
    pub fn new(uid: impl Into<String>, features: Vec<f64>, annotations: Vec<usize>) -> Self {
        Self {
            uid: uid.into(),
            features,
            annotations,
            true_dist: None,
            old_label: None,
            label_counter: None,
        }
    }

    pub fn cost(&self) -> usize {
        self.annotations.len()
    }

    /// Empirical distribution of the visible annotations.
    pub fn annotation_distribution(&self, k: usize) -> Result<LabelDistribution> {
        aggregate_distribution(&self.annotations, k)
    }

    /// Human reference distribution: the label counter when present, then
    /// the generating distribution, then the visible annotations.
    pub fn reference_distribution(&self, k: usize) -> Result<LabelDistribution> {
        if let Some(counter) = &self.label_counter {
            return LabelDistribution::from_counts(counter);
        }
        if let Some(d) = &self.true_dist {
            return Ok(d.clone());
        }
        self.annotation_distribution(k)
            .map_err(|_| Error::record(&self.uid, "no reference distribution"))
    }
}

/// How multiple annotations are collapsed into a training target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Distribution,
    Majority,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Aggregate {
    Distribution(LabelDistribution),
    Majority(usize),
}

pub fn aggregate_annotations(annotations: &[usize], mode: AggregationMode, k: usize) -> Result<Aggregate> {
    match mode {
        AggregationMode::Distribution => aggregate_distribution(annotations, k).map(Aggregate::Distribution),
        AggregationMode::Majority => majority_label(annotations, k).map(Aggregate::Majority),
    }
}

pub fn count_labels(annotations: &[usize], k: usize) -> Vec<u32> {
    let mut counts = vec![0u32; k];
    for &a in annotations {
        counts[a] += 1;
    }
    counts
}

/// Empirical label frequencies.
pub fn aggregate_distribution(annotations: &[usize], k: usize) -> Result<LabelDistribution> {
    if annotations.is_empty() {
        return Err(Error::EmptyAnnotations);
    }
    check_labels(annotations, k)?;
    LabelDistribution::from_counts(&count_labels(annotations, k))
}

/// Most frequent label, ties broken by vocabulary order.
pub fn majority_label(annotations: &[usize], k: usize) -> Result<usize> {
    if annotations.is_empty() {
        return Err(Error::EmptyAnnotations);
    }
    check_labels(annotations, k)?;
    Ok(majority_of_counts(&count_labels(annotations, k)))
}

pub fn majority_of_counts(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn check_labels(annotations: &[usize], k: usize) -> Result<()> {
    match annotations.iter().find(|&&a| a >= k) {
        Some(a) => Err(Error::InvalidDistribution(format!("label index {a} outside vocabulary of {k}"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E: usize = 0;
    const N: usize = 1;
    const C: usize = 2;

    #[test]
    fn chaos_counter_aggregates_to_frequencies() {
        let mut ann = vec![N; 93];
        ann.extend(vec![E; 7]);
        let d = aggregate_distribution(&ann, 3).unwrap();
        assert!((d.probs()[E] - 0.07).abs() < 1e-12);
        assert!((d.probs()[N] - 0.93).abs() < 1e-12);
        assert_eq!(d.probs()[C], 0.0);
    }

    #[test]
    fn single_annotation_is_one_hot() {
        let d = aggregate_distribution(&[E], 3).unwrap();
        assert_eq!(d, LabelDistribution::one_hot(3, E));
    }

    #[test]
    fn majority_of_old_labels() {
        assert_eq!(majority_label(&[E, E, N, N, E], 3).unwrap(), E);
    }

    #[test]
    fn majority_tie_goes_to_vocab_order() {
        assert_eq!(majority_label(&[E, N], 3).unwrap(), E);
        assert_eq!(majority_label(&[N, E], 3).unwrap(), E);
        assert_eq!(majority_label(&[C, N], 3).unwrap(), N);
    }

    #[test]
    fn empty_annotations_rejected() {
        let err = aggregate_annotations(&[], AggregationMode::Distribution, 3).unwrap_err();
        assert_eq!(err.to_string(), "cannot aggregate zero annotations");
        assert!(matches!(majority_label(&[], 3), Err(Error::EmptyAnnotations)));
    }

    #[test]
    fn vocab_rejects_duplicates_and_empty() {
        assert!(LabelVocab::new(Vec::<String>::new()).is_err());
        assert!(LabelVocab::new(["a", "b", "a"]).is_err());
        let v = LabelVocab::nli();
        assert_eq!(v.index_of("n"), Some(1));
    }

    #[test]
    fn distribution_validation() {
        assert!(LabelDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(LabelDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(LabelDistribution::new(vec![1.5, -0.5]).is_err());
    }

    proptest! {
        #[test]
        fn aggregation_is_permutation_invariant(
            mut ann in prop::collection::vec(0usize..4, 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let a = aggregate_distribution(&ann, 4).unwrap();
            let m = majority_label(&ann, 4).unwrap();
            ann.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, aggregate_distribution(&ann, 4).unwrap());
            prop_assert_eq!(m, majority_label(&ann, 4).unwrap());
        }

        #[test]
        fn copies_of_one_label_are_one_hot(label in 0usize..5, n in 1usize..50) {
            let d = aggregate_distribution(&vec![label; n], 5).unwrap();
            prop_assert_eq!(d, LabelDistribution::one_hot(5, label));
        }
    }
}
