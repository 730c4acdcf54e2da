//! Synthetic annotator pools with known per-example label distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{count_labels, majority_of_counts, AnnotatedExample, LabelDistribution, LabelVocab};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Annotations drawn per synthetic example.
pub const RESERVOIR_SIZE: usize = 100;

/// Leading reservoir annotations whose majority becomes `old_label`.
const OLD_LABEL_VOTES: usize = 5;

/// Parameters of the synthetic pool generator.
///
/// Each example picks a dominant class `c` and draws its true distribution
/// from a Dirichlet whose concentration is 1 on every class plus an extra
/// `dirichlet_sharp` (unambiguous) or `dirichlet_flat` (ambiguous) on `c`.
/// Larger extra concentration means a more peaked distribution; an infinite
/// value yields a one-hot distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_examples: usize,
    pub k_classes: usize,
    pub d_feat: usize,
    pub ambiguous_fraction: f64,
    pub dirichlet_sharp: f64,
    pub dirichlet_flat: f64,
    pub feature_noise_sigma: f64,
    pub seed: u64,
    /// Length of each class prototype vector.
    pub prototype_scale: f64,
    pub uid_prefix: String,
}

fn default_prototype_scale() -> f64 {
    3.0
}

fn default_uid_prefix() -> String {
    "x".to_string()
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_examples: 2000,
            k_classes: 3,
            d_feat: 16,
            ambiguous_fraction: 0.5,
            dirichlet_sharp: 30.0,
            dirichlet_flat: 0.5,
            feature_noise_sigma: 0.3,
            seed: 0,
            prototype_scale: default_prototype_scale(),
            uid_prefix: default_uid_prefix(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.k_classes < 2 {
            return bad("k_classes must be at least 2");
        }
        if self.d_feat < self.k_classes {
            return bad("d_feat must be at least k_classes");
        }
        if !(0.0..=1.0).contains(&self.ambiguous_fraction) {
            return bad("ambiguous_fraction must lie in [0, 1]");
        }
        if !(self.dirichlet_sharp > 0.0 && self.dirichlet_flat > 0.0) {
            return bad("Dirichlet concentrations must be positive");
        }
        if !(self.feature_noise_sigma >= 0.0 && self.feature_noise_sigma.is_finite()) {
            return bad("feature_noise_sigma must be finite and non-negative");
        }
        if !(self.prototype_scale.is_finite() && self.prototype_scale > 0.0) {
            return bad("prototype_scale must be finite and positive");
        }
        Ok(())
    }

    /// Label vocabulary for the generated pool: `e n c` for three classes,
    /// `c0 .. c{k-1}` otherwise.
    pub fn vocab(&self) -> LabelVocab {
        if self.k_classes == 3 {
            LabelVocab::nli()
        } else {
            LabelVocab::new((0..self.k_classes).map(|i| format!("c{i}"))).expect("generated names are unique")
        }
    }

    /// Dirichlet concentration vector for an example with dominant class `c`.
    pub fn concentration(&self, dominant: usize, ambiguous: bool) -> Vec<f64> {
        let extra = if ambiguous { self.dirichlet_flat } else { self.dirichlet_sharp };
        (0..self.k_classes)
            .map(|j| if j == dominant { 1.0 + extra } else { 1.0 })
            .collect()
    }
}

pub fn generate_synthetic_pool(config: &SyntheticConfig) -> Result<Vec<AnnotatedExample>> {
    generate_synthetic_pool_with(Exec::default(), config)
}

/// Generates `config.n_examples` examples. Example `i` draws from its own
/// ChaCha stream, so the output does not depend on the execution policy.
pub fn generate_synthetic_pool_with(exec: Exec, config: &SyntheticConfig) -> Result<Vec<AnnotatedExample>> {
    config.validate()?;
    Ok(par::map_range(exec, config.n_examples, |i| generate_one(config, i)))
}

fn generate_one(cfg: &SyntheticConfig, i: usize) -> AnnotatedExample {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let k = cfg.k_classes;

    let ambiguous = rng.random::<f64>() < cfg.ambiguous_fraction;
    let dominant = rng.random_range(0..k);
    let extra = if ambiguous { cfg.dirichlet_flat } else { cfg.dirichlet_sharp };
    let probs = if extra.is_infinite() {
        LabelDistribution::one_hot(k, dominant).into_vec()
    } else {
        let draws: Vec<f64> = cfg
            .concentration(dominant, ambiguous)
            .into_iter()
            .map(|a| Gamma::new(a, 1.0).expect("positive shape").sample(&mut rng))
            .collect();
        let total: f64 = draws.iter().sum();
        draws.into_iter().map(|g| g / total).collect()
    };

    let features = (0..cfg.d_feat)
        .map(|j| {
            let signal = if j < k { cfg.prototype_scale * probs[j] } else { 0.0 };
            let noise: f64 = StandardNormal.sample(&mut rng);
            signal + cfg.feature_noise_sigma * noise
        })
        .collect();

    let reservoir: Vec<usize> = (0..RESERVOIR_SIZE).map(|_| sample_categorical(&probs, &mut rng)).collect();
    let counter = count_labels(&reservoir, k);
    let old_label = majority_of_counts(&count_labels(&reservoir[..OLD_LABEL_VOTES], k));

    AnnotatedExample {
        uid: format!("{}{i}", cfg.uid_prefix),
        features,
        annotations: reservoir,
        true_dist: Some(LabelDistribution::from_vec_unchecked(probs)),
        old_label: Some(old_label),
        label_counter: Some(counter),
    }
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return j;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ambiguity_infinite_sharpness_is_unanimous() {
        let cfg = SyntheticConfig {
            n_examples: 200,
            ambiguous_fraction: 0.0,
            dirichlet_sharp: f64::INFINITY,
            ..Default::default()
        };
        for e in generate_synthetic_pool(&cfg).unwrap() {
            let d = e.true_dist.as_ref().unwrap();
            let top = d.argmax();
            assert_eq!(d, &LabelDistribution::one_hot(3, top));
            assert!(e.annotations.iter().all(|&a| a == top));
            assert_eq!(e.old_label, Some(top));
        }
    }

    #[test]
    fn same_seed_same_pool_any_exec() {
        let cfg = SyntheticConfig { n_examples: 300, seed: 17, ..Default::default() };
        let a = generate_synthetic_pool_with(Exec::Sequential, &cfg).unwrap();
        let b = generate_synthetic_pool(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_pool(&SyntheticConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn counters_cover_reservoir() {
        let cfg = SyntheticConfig { n_examples: 50, ..Default::default() };
        for e in generate_synthetic_pool(&cfg).unwrap() {
            let c = e.label_counter.as_ref().unwrap();
            assert_eq!(c.iter().sum::<u32>() as usize, RESERVOIR_SIZE);
            assert_eq!(e.features.len(), cfg.d_feat);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SyntheticConfig { d_feat: 2, ..Default::default() };
        assert!(generate_synthetic_pool(&cfg).is_err());
        let cfg = SyntheticConfig { ambiguous_fraction: 1.5, ..Default::default() };
        assert!(generate_synthetic_pool(&cfg).is_err());
    }
}
