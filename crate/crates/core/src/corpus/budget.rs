use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate_distribution, AnnotatedExample};
use crate::error::{Error, Result};
use crate::metrics::entropy;

/// How the examples that receive multiple annotations are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    #[default]
    Random,
    LowEntropy,
    HighEntropy,
}

/// Distribution of a fixed label budget over single, multi and unlabeled
/// examples. `n_single + n_multi * k_per_multi` must equal `total_labels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub total_labels: usize,
    pub n_single: usize,
    #[serde(default)]
    pub n_multi: usize,
    #[serde(default)]
    pub k_per_multi: usize,
    #[serde(default)]
    pub n_unlabeled: usize,
    #[serde(default)]
    pub selection_strategy: SelectionStrategy,
}

impl BudgetPlan {
    /// Builds a plan whose total is derived from the counts.
    pub fn new(n_single: usize, n_multi: usize, k_per_multi: usize, n_unlabeled: usize) -> Self {
        Self {
            total_labels: n_single + n_multi * k_per_multi,
            n_single,
            n_multi,
            k_per_multi,
            n_unlabeled,
            selection_strategy: SelectionStrategy::Random,
        }
    }

    pub fn with_selection(mut self, strategy: SelectionStrategy) -> Self {
        self.selection_strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let multi_labels = self
            .n_multi
            .checked_mul(self.k_per_multi)
            .ok_or_else(|| Error::InfeasiblePlan("multi label count overflows".into()))?;
        let spent = self.n_single + multi_labels;
        if spent != self.total_labels {
            return Err(Error::InfeasiblePlan(format!(
                "{} * 1 + {} * {} = {} does not equal the budget of {} labels",
                self.n_single, self.n_multi, self.k_per_multi, spent, self.total_labels
            )));
        }
        if self.n_multi > 0 && self.k_per_multi < 2 {
            return Err(Error::InfeasiblePlan(format!(
                "multi examples need at least 2 annotations, got k_per_multi = {}",
                self.k_per_multi
            )));
        }
        Ok(())
    }

    /// Budget arithmetic in the form `n_single * 1 + n_multi * k = total`.
    pub fn formula(&self) -> String {
        format!(
            "{} * 1 + {} * {} = {}",
            self.n_single, self.n_multi, self.k_per_multi, self.total_labels
        )
    }
}

/// Partition of a pool into single-label, multi-label and unlabeled sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub singles: Vec<AnnotatedExample>,
    pub multis: Vec<AnnotatedExample>,
    pub unlabeled: Vec<AnnotatedExample>,
}

impl CorpusSplit {
    pub fn total_labels(&self) -> usize {
        self.singles
            .iter()
            .chain(&self.multis)
            .chain(&self.unlabeled)
            .map(AnnotatedExample::cost)
            .sum()
    }

    /// Checks the structural invariants of a split produced under `plan`.
    pub fn check(&self, plan: &BudgetPlan) -> Result<()> {
        let bad = |msg: String| Err(Error::InfeasiblePlan(msg));
        if let Some(e) = self.singles.iter().find(|e| e.cost() != 1) {
            return bad(format!("single example {} has {} annotations", e.uid, e.cost()));
        }
        if let Some(e) = self.multis.iter().find(|e| e.cost() != plan.k_per_multi) {
            return bad(format!("multi example {} has {} annotations", e.uid, e.cost()));
        }
        if let Some(e) = self.unlabeled.iter().find(|e| e.cost() != 0) {
            return bad(format!("unlabeled example {} has {} annotations", e.uid, e.cost()));
        }
        let mut seen = HashSet::new();
        for e in self.singles.iter().chain(&self.multis).chain(&self.unlabeled) {
            if !seen.insert(e.uid.as_str()) {
                return bad(format!("uid {} appears in more than one set", e.uid));
            }
        }
        let total = self.total_labels();
        if total != plan.total_labels {
            return bad(format!("split spends {total} labels, plan has {}", plan.total_labels));
        }
        Ok(())
    }
}

fn annotation_entropy(e: &AnnotatedExample) -> f64 {
    let k = e.annotations.iter().max().map_or(1, |&m| m + 1);
    match aggregate_distribution(&e.annotations, k) {
        Ok(d) => entropy(d.probs()),
        Err(_) => 0.0,
    }
}

/// Splits `pool` according to `plan`.
///
/// Multi examples are chosen by `plan.selection_strategy` among pool examples
/// carrying at least `k_per_multi` annotations; each keeps exactly
/// `k_per_multi` annotations sampled without replacement. Singles keep one
/// annotation drawn uniformly. Up to `n_unlabeled` of the remaining examples
/// are returned with their annotations removed.
pub fn allocate_budget(pool: &[AnnotatedExample], plan: &BudgetPlan, seed: u64) -> Result<CorpusSplit> {
    plan.validate()?;
    let needed = plan.n_single + plan.n_multi;
    if needed > pool.len() {
        return Err(Error::InfeasiblePlan(format!(
            "pool has {} examples but the plan needs {needed} labeled examples ({} short)",
            pool.len(),
            needed - pool.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);

    let mut used = vec![false; pool.len()];

    let mut multi_idx = Vec::with_capacity(plan.n_multi);
    if plan.n_multi > 0 {
        let mut candidates: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| pool[i].cost() >= plan.k_per_multi)
            .collect();
        if candidates.len() < plan.n_multi {
            return Err(Error::InfeasiblePlan(format!(
                "only {} examples carry at least {} annotations but {} multi examples are needed ({} short)",
                candidates.len(),
                plan.k_per_multi,
                plan.n_multi,
                plan.n_multi - candidates.len()
            )));
        }
        match plan.selection_strategy {
            SelectionStrategy::Random => {}
            SelectionStrategy::LowEntropy | SelectionStrategy::HighEntropy => {
                let h: Vec<f64> = candidates.iter().map(|&i| annotation_entropy(&pool[i])).collect();
                let mut ranked: Vec<usize> = (0..candidates.len()).collect();
                if plan.selection_strategy == SelectionStrategy::LowEntropy {
                    ranked.sort_by(|&a, &b| h[a].total_cmp(&h[b]));
                } else {
                    ranked.sort_by(|&a, &b| h[b].total_cmp(&h[a]));
                }
                candidates = ranked.into_iter().map(|r| candidates[r]).collect();
            }
        }
        for &i in candidates.iter().take(plan.n_multi) {
            used[i] = true;
            multi_idx.push(i);
        }
    }

    let mut single_idx = Vec::with_capacity(plan.n_single);
    for &i in &order {
        if single_idx.len() == plan.n_single {
            break;
        }
        if !used[i] && pool[i].cost() >= 1 {
            used[i] = true;
            single_idx.push(i);
        }
    }
    if single_idx.len() < plan.n_single {
        return Err(Error::InfeasiblePlan(format!(
            "only {} annotated examples remain for {} single examples ({} short)",
            single_idx.len(),
            plan.n_single,
            plan.n_single - single_idx.len()
        )));
    }

    let multis = multi_idx
        .iter()
        .map(|&i| {
            let src = &pool[i];
            let picks = index::sample(&mut rng, src.cost(), plan.k_per_multi);
            let mut e = src.clone();
            e.annotations = picks.iter().map(|j| src.annotations[j]).collect();
            e
        })
        .collect();
    let singles = single_idx
        .iter()
        .map(|&i| {
            let src = &pool[i];
            let j = rng.random_range(0..src.cost());
            let mut e = src.clone();
            e.annotations = vec![src.annotations[j]];
            e
        })
        .collect();
    let unlabeled = order
        .iter()
        .filter(|&&i| !used[i])
        .take(plan.n_unlabeled)
        .map(|&i| {
            let mut e = pool[i].clone();
            e.annotations.clear();
            e
        })
        .collect();

    Ok(CorpusSplit {
        singles,
        multis,
        unlabeled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize, reservoir: usize) -> Vec<AnnotatedExample> {
        (0..n)
            .map(|i| {
                let ann = (0..reservoir).map(|j| (i + j) % 3).collect();
                AnnotatedExample::new(format!("p{i}"), vec![i as f64], ann)
            })
            .collect()
    }

    #[test]
    fn ufet_row_spends_exactly_500() {
        let plan = BudgetPlan::new(100, 200, 2, 0);
        assert_eq!(plan.total_labels, 500);
        let split = allocate_budget(&pool(400, 4), &plan, 1).unwrap();
        split.check(&plan).unwrap();
        assert_eq!(split.singles.len(), 100);
        assert_eq!(split.multis.len(), 200);
        assert_eq!(split.total_labels(), 500);
    }

    #[test]
    fn single_only_plan() {
        let plan = BudgetPlan::new(50, 0, 0, 0);
        let split = allocate_budget(&pool(60, 3), &plan, 2).unwrap();
        assert_eq!(split.singles.len(), 50);
        assert!(split.multis.is_empty());
        assert_eq!(split.total_labels(), 50);
    }

    #[test]
    fn multi_only_plan() {
        let plan = BudgetPlan::new(0, 500, 2, 0);
        assert_eq!(plan.total_labels, 1000);
        let split = allocate_budget(&pool(600, 5), &plan, 3).unwrap();
        split.check(&plan).unwrap();
        assert!(split.singles.is_empty());
    }

    #[test]
    fn mismatched_total_rejected() {
        let mut plan = BudgetPlan::new(10, 1, 10, 0);
        plan.total_labels = 21;
        let err = allocate_budget(&pool(20, 10), &plan, 0).unwrap_err();
        assert!(err.to_string().contains("does not equal"), "{err}");
    }

    #[test]
    fn exhausted_pool_names_deficit() {
        let plan = BudgetPlan::new(15, 0, 0, 0);
        let err = allocate_budget(&pool(10, 1), &plan, 0).unwrap_err();
        assert!(err.to_string().contains("5 short"), "{err}");
    }

    #[test]
    fn too_few_annotations_names_deficit() {
        let mut p = pool(10, 1);
        p[0].annotations = vec![0; 10];
        let plan = BudgetPlan::new(0, 3, 10, 0);
        let err = allocate_budget(&p, &plan, 0).unwrap_err();
        assert!(err.to_string().contains("2 short"), "{err}");
    }

    #[test]
    fn unlabeled_are_stripped_and_disjoint() {
        let plan = BudgetPlan::new(10, 5, 2, 100);
        let split = allocate_budget(&pool(40, 3), &plan, 9).unwrap();
        split.check(&plan).unwrap();
        assert_eq!(split.unlabeled.len(), 25);
    }

    #[test]
    fn deterministic_given_seed() {
        let plan = BudgetPlan::new(10, 5, 2, 5);
        let p = pool(40, 3);
        assert_eq!(allocate_budget(&p, &plan, 4).unwrap(), allocate_budget(&p, &plan, 4).unwrap());
    }
}
