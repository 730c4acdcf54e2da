//! Training strategies over single-label, multi-label and unlabeled sets:
//! plain cross-entropy variants, curriculum fine-tuning, and MixUp
//! objectives with argmax pseudo-labels and a ramped cross-set weight.

use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::calibrate::train_smooth;
use crate::corpus::{majority_label, AnnotatedExample, CorpusSplit, LabelDistribution};
use crate::error::{Error, Result};
use crate::model::{
    grad_batch, multi_hot, predict_types, AdamConfig, AdamState, Architecture, ClassifierParams, Head, Objective,
    Sample,
};

/// What the model predicts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// A distribution over mutually exclusive labels.
    #[default]
    Distribution,
    /// A set of types; annotations are positive type indices.
    Typing,
}

impl Task {
    pub fn head(self) -> Head {
        match self {
            Task::Distribution => Head::Softmax,
            Task::Typing => Head::Sigmoid,
        }
    }
}

/// How annotations become training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Empirical annotation frequencies.
    Distribution,
    /// One-hot majority label, ties to vocabulary order.
    Majority,
    /// Multi-hot vector of annotated types.
    MultiHot,
}

impl TargetMode {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Distribution => TargetMode::Distribution,
            Task::Typing => TargetMode::MultiHot,
        }
    }
}

/// Training pairs built from a split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSets {
    pub singles: Vec<Sample>,
    pub multis: Vec<Sample>,
    pub unlabeled: Vec<Vec<f64>>,
}

pub fn target_for(e: &AnnotatedExample, mode: TargetMode, k: usize) -> Result<Vec<f64>> {
    let with_uid = |err: Error| Error::record(&e.uid, err.to_string());
    Ok(match mode {
        TargetMode::Distribution => e.annotation_distribution(k).map_err(with_uid)?.into_vec(),
        TargetMode::Majority => {
            LabelDistribution::one_hot(k, majority_label(&e.annotations, k).map_err(with_uid)?).into_vec()
        }
        TargetMode::MultiHot => {
            if e.annotations.is_empty() {
                return Err(Error::record(&e.uid, "no annotated types"));
            }
            multi_hot(k, &e.annotations)
        }
    })
}

/// Single examples become one-hot (or multi-hot) targets, multi examples
/// frequency or majority targets; `smoothing` shifts that much mass from each
/// target's gold label to all labels.
pub fn make_targets(split: &CorpusSplit, mode: TargetMode, k: usize, smoothing: Option<f64>) -> Result<TrainingSets> {
    let build = |set: &[AnnotatedExample]| -> Result<Vec<Sample>> {
        set.iter()
            .map(|e| {
                let mut y = target_for(e, mode, k)?;
                if let Some(a) = smoothing {
                    y = train_smooth(&y, a).map_err(|err| Error::record(&e.uid, err.to_string()))?;
                }
                Ok(Sample::new(e.features.clone(), y))
            })
            .collect()
    };
    Ok(TrainingSets {
        singles: build(&split.singles)?,
        multis: build(&split.multis)?,
        unlabeled: split.unlabeled.iter().map(|e| e.features.clone()).collect(),
    })
}

/// Convex combination `lambda * a + (1 - lambda) * b` of features and targets.
pub fn mix_pair(a: &Sample, b: &Sample, lambda: f64) -> Result<Sample> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    if a.x.len() != b.x.len() {
        return Err(Error::ShapeMismatch { expected: a.x.len(), got: b.x.len() });
    }
    if a.y.len() != b.y.len() {
        return Err(Error::ShapeMismatch { expected: a.y.len(), got: b.y.len() });
    }
    let mix = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect() };
    Ok(Sample::new(mix(&a.x, &b.x), mix(&a.y, &b.y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "default_ramp")]
    pub ramp_iters: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_eta() -> f64 {
    1.0
}
fn default_alpha_max() -> f64 {
    2.0
}
fn default_ramp() -> usize {
    100
}
fn default_batch() -> usize {
    128
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self { eta: default_eta(), alpha_max: default_alpha_max(), ramp_iters: default_ramp(), batch_size: default_batch() }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.alpha_max >= 0.0 && self.alpha_max.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha_max must be non-negative, got {}", self.alpha_max)));
        }
        if self.ramp_iters == 0 {
            return Err(Error::InvalidConfig("ramp_iters must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cross-set loss weight: linear from 0 to `alpha_max` over `ramp_iters`.
pub fn ramp_alpha(iter: usize, cfg: &MixupConfig) -> f64 {
    (iter as f64 / cfg.ramp_iters as f64).min(1.0) * cfg.alpha_max
}

/// One-hot target at the argmax of the model's current prediction.
pub fn pseudo_label(params: &ClassifierParams, x: &[f64]) -> Result<LabelDistribution> {
    let p = params.forward_softmax(x)?;
    Ok(LabelDistribution::one_hot(p.len(), p.argmax()))
}

/// Pseudo target for the head in use: a sharpened one-hot distribution for
/// softmax heads, the predicted type set for sigmoid heads.
pub fn pseudo_target(params: &ClassifierParams, x: &[f64]) -> Result<Vec<f64>> {
    match params.arch().head {
        Head::Softmax => pseudo_label(params, x).map(LabelDistribution::into_vec),
        Head::Sigmoid => {
            let s = params.forward_multilabel(x)?;
            Ok(multi_hot(s.len(), &predict_types(&s, 0.5)))
        }
    }
}

/// The loss terms of the MixUp objectives, named by the two sets mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Ss,
    Mm,
    Sm,
    Su,
    Mu,
}

impl Term {
    pub fn is_cross(self) -> bool {
        matches!(self, Term::Sm | Term::Su | Term::Mu)
    }
}

/// A mixed batch with its weight in the total objective and the
/// `(left, right)` positions of each pair in the source batches.
#[derive(Debug, Clone, PartialEq)]
pub struct TermBatch {
    pub term: Term,
    pub weight: f64,
    pub lambda: f64,
    pub pairs: Vec<(usize, usize)>,
    pub samples: Vec<Sample>,
}

/// Per-set batches for one MixUp step. Unlabeled entries already carry
/// their pseudo targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SetBatches {
    pub singles: Vec<Sample>,
    pub multis: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
}

fn mix_term(
    term: Term,
    weight: f64,
    lambda: f64,
    left: &[Sample],
    right: &[Sample],
    pairs: Vec<(usize, usize)>,
) -> Result<TermBatch> {
    let samples = pairs
        .iter()
        .map(|&(i, j)| mix_pair(&left[i], &right[j], lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(TermBatch { term, weight, lambda, pairs, samples })
}

fn within_pairs<R: Rng>(n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    (0..n).zip(perm).collect()
}

fn cross_pairs<R: Rng>(n_left: usize, n_right: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut l: Vec<usize> = (0..n_left).collect();
    let mut r: Vec<usize> = (0..n_right).collect();
    l.shuffle(rng);
    r.shuffle(rng);
    l.into_iter().zip(r).collect()
}

/// Builds the mixed batches of `terms`. Within-set terms mix a batch with a
/// permutation of itself; cross-set terms pair shuffled batches element-wise.
/// Cross terms carry weight `alpha`, within-set terms weight 1. `lambda`
/// supplies one coefficient per term.
pub fn build_terms<R, L>(
    terms: &[Term],
    batches: &SetBatches,
    alpha: f64,
    mut lambda: L,
    rng: &mut R,
) -> Result<Vec<TermBatch>>
where
    R: Rng,
    L: FnMut(&mut R) -> f64,
{
    terms
        .iter()
        .map(|&term| {
            let lam = lambda(rng);
            let (left, right) = match term {
                Term::Ss => (&batches.singles, &batches.singles),
                Term::Mm => (&batches.multis, &batches.multis),
                Term::Sm => (&batches.singles, &batches.multis),
                Term::Su => (&batches.singles, &batches.unlabeled),
                Term::Mu => (&batches.multis, &batches.unlabeled),
            };
            let pairs = if term.is_cross() {
                cross_pairs(left.len(), right.len(), rng)
            } else {
                within_pairs(left.len(), rng)
            };
            let weight = if term.is_cross() { alpha } else { 1.0 };
            mix_term(term, weight, lam, left, right, pairs)
        })
        .collect()
}

/// Loss of each term and the total `sum(weight * loss)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub total: f64,
    pub terms: Vec<(Term, f64)>,
}

/// Weighted sum of the mean losses of `terms` and its exact gradient.
pub fn composite_loss_grad(
    params: &ClassifierParams,
    terms: &[TermBatch],
    objective: Objective,
) -> Result<(CompositeLoss, Vec<f64>)> {
    let mut grad = vec![0.0; params.values().len()];
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(terms.len());
    for t in terms {
        let (loss, g) = grad_batch(params, &t.samples, objective)?;
        total += t.weight * loss;
        if t.weight != 0.0 {
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += t.weight * b);
        }
        parts.push((t.term, loss));
    }
    Ok((CompositeLoss { total, terms: parts }, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    CeCombined,
    CeUpsampling,
    CeCurriculum,
    MixupS,
    MixupSm,
    MixupSu,
    MixupSuThenM,
    MixupSmu,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        StrategyKind::CeCombined,
        StrategyKind::CeUpsampling,
        StrategyKind::CeCurriculum,
        StrategyKind::MixupS,
        StrategyKind::MixupSm,
        StrategyKind::MixupSu,
        StrategyKind::MixupSuThenM,
        StrategyKind::MixupSmu,
    ];

    /// MixUp terms of the main phase; empty for cross-entropy kinds.
    pub fn mixup_terms(self) -> &'static [Term] {
        match self {
            StrategyKind::MixupS => &[Term::Ss],
            StrategyKind::MixupSm => &[Term::Ss, Term::Mm, Term::Sm],
            StrategyKind::MixupSu | StrategyKind::MixupSuThenM => &[Term::Ss, Term::Su],
            StrategyKind::MixupSmu => &[Term::Ss, Term::Mm, Term::Sm, Term::Su, Term::Mu],
            _ => &[],
        }
    }

    /// Whether a second phase fine-tunes on the multi-label set.
    pub fn has_finetune(self) -> bool {
        matches!(self, StrategyKind::CeCurriculum | StrategyKind::MixupSuThenM)
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::CeCombined => "ce_combined",
            StrategyKind::CeUpsampling => "ce_upsampling",
            StrategyKind::CeCurriculum => "ce_curriculum",
            StrategyKind::MixupS => "mixup_s",
            StrategyKind::MixupSm => "mixup_sm",
            StrategyKind::MixupSu => "mixup_su",
            StrategyKind::MixupSuThenM => "mixup_su_then_m",
            StrategyKind::MixupSmu => "mixup_smu",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default = "default_main")]
    pub iterations_main: usize,
    #[serde(default = "default_finetune")]
    pub iterations_finetune: usize,
    #[serde(default)]
    pub mixup: MixupConfig,
    #[serde(default = "default_adam")]
    pub optimizer: AdamConfig,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the task's default target construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_mode: Option<TargetMode>,
    /// Mass moved from each training target's gold label to all labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_smoothing: Option<f64>,
    /// Weight of unannotated types in the typing loss.
    #[serde(default = "default_w_neg")]
    pub w_neg: f64,
}

fn default_main() -> usize {
    3500
}
fn default_finetune() -> usize {
    30
}
fn default_adam() -> AdamConfig {
    AdamConfig::with_lr(1e-5)
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_w_neg() -> f64 {
    Objective::DEFAULT_W_NEG
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            iterations_main: default_main(),
            iterations_finetune: default_finetune(),
            mixup: MixupConfig::default(),
            optimizer: default_adam(),
            hidden: default_hidden(),
            seed: 0,
            target_mode: None,
            train_smoothing: None,
            w_neg: default_w_neg(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations_main == 0 {
            return Err(Error::InvalidConfig("iterations_main must be at least 1".into()));
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.optimizer.lr)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be positive".into()));
        }
        self.mixup.validate()
    }
}

/// One training iteration. Loss components absent from the strategy are
/// `None`; `alpha` is present only for MixUp phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub phase: u8,
    pub alpha: Option<f64>,
    pub total: f64,
    pub ce: Option<f64>,
    pub ss: Option<f64>,
    pub mm: Option<f64>,
    pub sm: Option<f64>,
    pub su: Option<f64>,
    pub mu: Option<f64>,
}

impl LogEntry {
    fn new(iter: usize, phase: u8, total: f64) -> Self {
        Self { iter, phase, alpha: None, total, ce: None, ss: None, mm: None, sm: None, su: None, mu: None }
    }

    fn set_term(&mut self, term: Term, loss: f64) {
        let slot = match term {
            Term::Ss => &mut self.ss,
            Term::Mm => &mut self.mm,
            Term::Sm => &mut self.sm,
            Term::Su => &mut self.su,
            Term::Mu => &mut self.mu,
        };
        *slot = Some(loss);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub const HEADER: &'static str = "iter\tphase\talpha\ttotal\tce\tss\tmm\tsm\tsu\tmu";

    fn line(e: &LogEntry) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:?}"));
        format!(
            "{}\t{}\t{}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.iter,
            e.phase,
            opt(e.alpha),
            e.total,
            opt(e.ce),
            opt(e.ss),
            opt(e.mm),
            opt(e.sm),
            opt(e.su),
            opt(e.mu)
        )
    }

    /// Tab-separated log with a header row; absent values are `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&Self::line(e));
            out.push('\n');
        }
        out
    }

    pub fn tail(&self, n: usize) -> String {
        let start = self.entries.len().saturating_sub(n);
        let mut out = String::from(Self::HEADER);
        for e in &self.entries[start..] {
            out.push('\n');
            out.push_str(&Self::line(e));
        }
        out
    }
}

/// Indices drawn for one batch: without replacement when the set is large
/// enough, otherwise with replacement.
fn sample_batch<R: Rng>(len: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    if len >= batch {
        index::sample(rng, len, batch).into_vec()
    } else {
        (0..batch).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Endless shuffled pass over a fixed index list, reshuffled every epoch.
struct EpochStream {
    order: Vec<usize>,
    pos: usize,
    /// Extra indices drawn with replacement from `upsample.0` each epoch.
    upsample: Option<(Vec<usize>, usize)>,
    base: Vec<usize>,
}

impl EpochStream {
    fn new(base: Vec<usize>) -> Self {
        Self { order: Vec::new(), pos: 0, upsample: None, base }
    }

    fn upsampled(base: Vec<usize>, pool: Vec<usize>, draws: usize) -> Self {
        Self { order: Vec::new(), pos: 0, upsample: Some((pool, draws)), base }
    }

    fn refill<R: Rng>(&mut self, rng: &mut R) {
        self.order = self.base.clone();
        if let Some((pool, draws)) = &self.upsample {
            self.order.extend((0..*draws).map(|_| pool[rng.random_range(0..pool.len())]));
        }
        self.order.shuffle(rng);
        self.pos = 0;
    }

    fn next_batch<R: Rng>(&mut self, size: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.refill(rng);
            }
            let take = (size - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

struct Trainer<'a> {
    spec: &'a StrategySpec,
    objective: Objective,
    params: ClassifierParams,
    rng: ChaCha8Rng,
    log: TrainLog,
    iter: usize,
}

impl Trainer<'_> {
    fn adam(&self) -> AdamState {
        AdamState::new(self.spec.optimizer, self.params.values().len())
    }

    fn check_loss(&self, loss: f64) -> Result<()> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteLoss { iter: self.iter, tail: self.log.tail(5) })
        }
    }

    fn run_ce(&mut self, data: &[Sample], mut stream: EpochStream, iters: usize, phase: u8) -> Result<()> {
        let mut adam = self.adam();
        let bs = self.spec.mixup.batch_size;
        for _ in 0..iters {
            let idx = stream.next_batch(bs, &mut self.rng);
            let batch: Vec<Sample> = idx.iter().map(|&i| data[i].clone()).collect();
            let (loss, grad) = grad_batch(&self.params, &batch, self.objective)?;
            self.check_loss(loss)?;
            adam.step(&mut self.params, &grad)?;
            let mut entry = LogEntry::new(self.iter, phase, loss);
            entry.ce = Some(loss);
            self.log.entries.push(entry);
            self.iter += 1;
        }
        Ok(())
    }

    fn run_mixup(&mut self, sets: &TrainingSets, terms: &[Term], iters: usize, phase: u8) -> Result<()> {
        let mut adam = self.adam();
        let cfg = self.spec.mixup;
        let beta = Beta::new(cfg.eta, cfg.eta).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let uses_m = terms.iter().any(|t| matches!(t, Term::Mm | Term::Sm | Term::Mu));
        let uses_u = terms.iter().any(|t| matches!(t, Term::Su | Term::Mu));
        for t in 0..iters {
            let alpha = ramp_alpha(t, &cfg);
            let mut batches = SetBatches::default();
            let pick = |set: &[Sample], rng: &mut ChaCha8Rng| -> Vec<Sample> {
                sample_batch(set.len(), cfg.batch_size, rng).into_iter().map(|i| set[i].clone()).collect()
            };
            batches.singles = pick(&sets.singles, &mut self.rng);
            if uses_m {
                batches.multis = pick(&sets.multis, &mut self.rng);
            }
            if uses_u {
                let idx = sample_batch(sets.unlabeled.len(), cfg.batch_size, &mut self.rng);
                batches.unlabeled = idx
                    .into_iter()
                    .map(|i| {
                        let x = sets.unlabeled[i].clone();
                        pseudo_target(&self.params, &x).map(|y| Sample::new(x, y))
                    })
                    .collect::<Result<_>>()?;
            }
            let built = build_terms(terms, &batches, alpha, |r| beta.sample(r), &mut self.rng)?;
            let (loss, grad) = composite_loss_grad(&self.params, &built, self.objective)?;
            self.check_loss(loss.total)?;
            adam.step(&mut self.params, &grad)?;
            let mut entry = LogEntry::new(self.iter, phase, loss.total);
            entry.alpha = Some(alpha);
            for (term, l) in loss.terms {
                entry.set_term(term, l);
            }
            self.log.entries.push(entry);
            self.iter += 1;
        }
        Ok(())
    }
}

fn require(kind: StrategyKind, set: &'static str, len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::EmptySet { strategy: kind.name().to_string(), set });
    }
    Ok(())
}

/// Trains a classifier on `split` with the strategy in `spec`.
///
/// `n_labels` is the vocabulary size. Deterministic given `spec.seed`.
pub fn run_strategy(spec: &StrategySpec, split: &CorpusSplit, task: Task, n_labels: usize) -> Result<(ClassifierParams, TrainLog)> {
    spec.validate()?;
    let kind = spec.kind;
    let mode = spec.target_mode.unwrap_or_else(|| TargetMode::for_task(task));
    let sets = make_targets(split, mode, n_labels, spec.train_smoothing)?;

    let finetune = kind.has_finetune() && spec.iterations_finetune > 0;
    match kind {
        StrategyKind::CeCombined => require(kind, "labeled", sets.singles.len() + sets.multis.len())?,
        StrategyKind::CeUpsampling => {
            require(kind, "single", sets.singles.len())?;
            require(kind, "multi", sets.multis.len())?;
        }
        _ => require(kind, "single", sets.singles.len())?,
    }
    if finetune || kind.mixup_terms().iter().any(|t| matches!(t, Term::Mm | Term::Sm | Term::Mu)) {
        require(kind, "multi", sets.multis.len())?;
    }
    if kind.mixup_terms().iter().any(|t| matches!(t, Term::Su | Term::Mu)) {
        require(kind, "unlabeled", sets.unlabeled.len())?;
    }

    let d_in = sets
        .singles
        .first()
        .or(sets.multis.first())
        .map(|s| s.x.len())
        .expect("a labeled set is non-empty");
    let arch = Architecture::new(d_in, spec.hidden.clone(), n_labels, task.head());
    let objective = match task.head() {
        Head::Softmax => Objective::SoftCrossEntropy,
        Head::Sigmoid => Objective::WeightedBce { w_neg: spec.w_neg },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut trainer = Trainer {
        spec,
        objective,
        params: ClassifierParams::xavier(arch, spec.seed),
        rng,
        log: TrainLog::default(),
        iter: 0,
    };

    let ns = sets.singles.len();
    let nm = sets.multis.len();
    match kind {
        StrategyKind::CeCombined => {
            let data: Vec<Sample> = sets.singles.iter().chain(&sets.multis).cloned().collect();
            trainer.run_ce(&data, EpochStream::new((0..ns + nm).collect()), spec.iterations_main, 1)?;
        }
        StrategyKind::CeUpsampling => {
            let data: Vec<Sample> = sets.singles.iter().chain(&sets.multis).cloned().collect();
            let multi_idx: Vec<usize> = (ns..ns + nm).collect();
            let stream = if nm >= ns {
                EpochStream::new((0..ns + nm).collect())
            } else {
                EpochStream::upsampled((0..ns).collect(), multi_idx, ns)
            };
            trainer.run_ce(&data, stream, spec.iterations_main, 1)?;
        }
        StrategyKind::CeCurriculum => {
            trainer.run_ce(&sets.singles, EpochStream::new((0..ns).collect()), spec.iterations_main, 1)?;
        }
        _ => trainer.run_mixup(&sets, kind.mixup_terms(), spec.iterations_main, 1)?,
    }
    if finetune {
        trainer.run_ce(&sets.multis, EpochStream::new((0..nm).collect()), spec.iterations_finetune, 2)?;
    }
    Ok((trainer.params, trainer.log))
}
