//! Distribution-prediction and typing metrics, entropy histograms and the
//! evaluation report.
//!
//! Log bases: KL divergence and entropy are in nats; JSD is in bits so that
//! it is bounded by 1.

use serde::{Deserialize, Serialize};

use crate::corpus::{argmax, majority_of_counts, AnnotatedExample};
use crate::error::{Error, Result};
use crate::model::predict_types;

/// Floor applied to the second argument of [`kl_div`].
pub const KL_FLOOR: f64 = 1e-10;

/// Default number of entropy histogram bins.
pub const DEFAULT_BINS: usize = 20;

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

fn entropy2(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
}

/// `KL(p || q)` in nats with `q` floored at [`KL_FLOOR`].
pub fn kl_div(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b.max(KL_FLOOR)).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Jensen-Shannon divergence in bits, `H(m) - (H(p) + H(q)) / 2` with
/// `m = (p + q) / 2`. Symmetric and bounded by `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (entropy2(&m) - (0.5 * entropy2(p) + 0.5 * entropy2(q))).clamp(0.0, 1.0)
}

/// Counts of `values` in `n_bins` equal-width bins over `[0, upper]`. The
/// last bin is closed on the right; values outside the range are clamped.
pub fn histogram(values: &[f64], n_bins: usize, upper: f64) -> Vec<usize> {
    assert!(n_bins >= 1, "at least one bin");
    let width = upper / n_bins as f64;
    let mut counts = vec![0; n_bins];
    for &v in values {
        let b = if width > 0.0 { (v / width).floor() } else { 0.0 };
        let b = if b.is_nan() || b < 0.0 { 0 } else { (b as usize).min(n_bins - 1) };
        counts[b] += 1;
    }
    counts
}

/// Histogram of predicted entropies over `[0, ln k]`.
pub fn entropy_histogram(dists: &[Vec<f64>], n_bins: usize) -> Vec<usize> {
    let k = dists.first().map_or(1, Vec::len);
    let h: Vec<f64> = dists.iter().map(|d| entropy(d)).collect();
    histogram(&h, n_bins, (k as f64).ln())
}

/// `(left, right)` edges of each histogram bin.
pub fn bin_edges(n_bins: usize, upper: f64) -> Vec<(f64, f64)> {
    let width = upper / n_bins as f64;
    (0..n_bins)
        .map(|i| (i as f64 * width, if i + 1 == n_bins { upper } else { (i + 1) as f64 * width }))
        .collect()
}

/// Accuracy against the original few-annotator label (old) and against the
/// majority of the label counter (new).
pub fn accuracy_old_new(preds: &[Vec<f64>], examples: &[AnnotatedExample]) -> Result<(f64, f64)> {
    let mut old = 0usize;
    let mut new = 0usize;
    for (p, e) in preds.iter().zip(examples) {
        let (o, n) = old_new_hits(p, e)?;
        old += o as usize;
        new += n as usize;
    }
    let n = preds.len().max(1) as f64;
    Ok((old as f64 / n, new as f64 / n))
}

fn old_new_hits(pred: &[f64], e: &AnnotatedExample) -> Result<(bool, bool)> {
    let old = e.old_label.ok_or_else(|| Error::record(&e.uid, "missing old_label"))?;
    let counter = e
        .label_counter
        .as_ref()
        .ok_or_else(|| Error::record(&e.uid, "missing label_counter"))?;
    let top = argmax(pred);
    Ok((top == old, top == majority_of_counts(counter)))
}

/// Macro-averaged precision, recall and F1 over examples.
pub fn macro_prf(preds: &[Vec<usize>], golds: &[Vec<usize>], uids: &[String]) -> Result<(f64, f64, f64)> {
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for (i, (pred, gold)) in preds.iter().zip(golds).enumerate() {
        let (p, r) = precision_recall(pred, gold).ok_or_else(|| {
            let uid = uids.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
            Error::record(&uid, "empty gold type set")
        })?;
        p_sum += p;
        r_sum += r;
    }
    let n = preds.len().max(1) as f64;
    let (p, r) = (p_sum / n, r_sum / n);
    Ok((p, r, f1(p, r)))
}

fn precision_recall(pred: &[usize], gold: &[usize]) -> Option<(f64, f64)> {
    if gold.is_empty() {
        return None;
    }
    let hit = pred.iter().filter(|t| gold.contains(t)).count() as f64;
    let p = if pred.is_empty() { 0.0 } else { hit / pred.len() as f64 };
    Some((p, hit / gold.len() as f64))
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// 1-based rank of `target` when types are sorted by descending score, ties
/// broken by type index.
fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v > s || (v == s && i < target))
        .count()
}

/// Reciprocal ranks of each gold type in one example.
fn reciprocal_ranks(scores: &[f64], gold: &[usize]) -> Vec<f64> {
    gold.iter().map(|&g| 1.0 / rank_of(scores, g) as f64).collect()
}

/// Mean reciprocal rank over all (example, gold type) pairs.
pub fn mrr(scores: &[Vec<f64>], golds: &[Vec<usize>]) -> f64 {
    let rr: Vec<f64> = scores
        .iter()
        .zip(golds)
        .flat_map(|(s, g)| reciprocal_ranks(s, g))
        .collect();
    if rr.is_empty() {
        0.0
    } else {
        rr.iter().sum::<f64>() / rr.len() as f64
    }
}

/// Direction of the reported KL divergence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(human || model)`.
    #[default]
    HumanModel,
    /// `KL(model || human)`.
    ModelHuman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default)]
    pub kl_direction: KlDirection,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}
fn default_threshold() -> f64 {
    0.5
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { n_bins: DEFAULT_BINS, kl_direction: KlDirection::HumanModel, threshold: 0.5 }
    }
}

/// Metrics of one evaluation example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub uid: String,
    /// Predicted distribution (softmax heads) or per-type scores.
    pub pred: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_types: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_types: Option<Vec<usize>>,
    pub entropy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_old: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_new: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rr: Option<f64>,
}

/// Post-hoc or training-time calibration applied before evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub method: String,
    pub scalar: f64,
    pub target_entropy: f64,
    pub pre_entropy: f64,
    pub post_entropy: f64,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_eval: usize,
    pub mean_pred_entropy: f64,
    pub entropy_histogram: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc_old: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc_new: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mrr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub per_example: Vec<ExampleRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl EvalReport {
    /// Report for distribution prediction. `preds[i]` is the predicted
    /// distribution for `examples[i]`; the human reference comes from each
    /// example's label counter (or true distribution). Accuracy is filled in
    /// only when every example carries both gold references.
    pub fn distribution(preds: &[Vec<f64>], examples: &[AnnotatedExample], opts: &EvalOptions) -> Result<Self> {
        check_lengths(preds.len(), examples.len())?;
        let with_acc = examples.iter().all(|e| e.old_label.is_some() && e.label_counter.is_some());
        let per_example = preds
            .iter()
            .zip(examples)
            .map(|(p, e)| {
                let gold = e.reference_distribution(p.len())?.into_vec();
                if gold.len() != p.len() {
                    return Err(Error::record(&e.uid, "reference and prediction sizes differ"));
                }
                let kl = match opts.kl_direction {
                    KlDirection::HumanModel => kl_div(&gold, p),
                    KlDirection::ModelHuman => kl_div(p, &gold),
                };
                let (correct_old, correct_new) = if with_acc {
                    let (o, n) = old_new_hits(p, e)?;
                    (Some(o), Some(n))
                } else {
                    (None, None)
                };
                Ok(ExampleRecord {
                    uid: e.uid.clone(),
                    pred: p.clone(),
                    entropy: entropy(p),
                    kl: Some(kl),
                    jsd: Some(jsd(&gold, p)),
                    gold: Some(gold),
                    correct_old,
                    correct_new,
                    pred_types: None,
                    gold_types: None,
                    precision: None,
                    recall: None,
                    rr: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let acc = |f: fn(&ExampleRecord) -> Option<bool>| {
            with_acc.then(|| mean(per_example.iter().map(|r| f(r).map_or(0.0, |b| b as u8 as f64))))
        };
        let summary = EvalSummary {
            n_eval: per_example.len(),
            mean_pred_entropy: mean(per_example.iter().map(|r| r.entropy)),
            entropy_histogram: entropy_histogram(preds, opts.n_bins),
            jsd: Some(mean(per_example.iter().map(|r| r.jsd.unwrap()))),
            kl: Some(mean(per_example.iter().map(|r| r.kl.unwrap()))),
            acc_old: acc(|r| r.correct_old),
            acc_new: acc(|r| r.correct_new),
            macro_p: None,
            macro_r: None,
            macro_f1: None,
            mrr: None,
            calibration: None,
        };
        Ok(Self { summary, per_example })
    }

    /// Report for multi-label typing. `scores[i]` are per-type sigmoid scores
    /// for `examples[i]`, whose annotations are the gold types.
    pub fn typing(scores: &[Vec<f64>], examples: &[AnnotatedExample], opts: &EvalOptions) -> Result<Self> {
        check_lengths(scores.len(), examples.len())?;
        let per_example = scores
            .iter()
            .zip(examples)
            .map(|(s, e)| {
                let mut gold = e.annotations.clone();
                gold.sort_unstable();
                gold.dedup();
                let pred = predict_types(s, opts.threshold);
                let (p, r) =
                    precision_recall(&pred, &gold).ok_or_else(|| Error::record(&e.uid, "empty gold type set"))?;
                let rr = reciprocal_ranks(s, &gold);
                let total: f64 = s.iter().sum();
                let norm: Vec<f64> = s.iter().map(|v| v / total).collect();
                Ok(ExampleRecord {
                    uid: e.uid.clone(),
                    pred: s.clone(),
                    gold: None,
                    pred_types: Some(pred),
                    gold_types: Some(gold),
                    entropy: entropy(&norm),
                    kl: None,
                    jsd: None,
                    correct_old: None,
                    correct_new: None,
                    precision: Some(p),
                    recall: Some(r),
                    rr: Some(rr.iter().sum::<f64>() / rr.len() as f64),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let golds: Vec<Vec<usize>> = per_example.iter().map(|r| r.gold_types.clone().unwrap()).collect();
        let macro_p = mean(per_example.iter().map(|r| r.precision.unwrap()));
        let macro_r = mean(per_example.iter().map(|r| r.recall.unwrap()));
        let norm: Vec<Vec<f64>> = per_example
            .iter()
            .map(|r| {
                let t: f64 = r.pred.iter().sum();
                r.pred.iter().map(|v| v / t).collect()
            })
            .collect();
        let summary = EvalSummary {
            n_eval: per_example.len(),
            mean_pred_entropy: mean(per_example.iter().map(|r| r.entropy)),
            entropy_histogram: entropy_histogram(&norm, opts.n_bins),
            jsd: None,
            kl: None,
            acc_old: None,
            acc_new: None,
            macro_p: Some(macro_p),
            macro_r: Some(macro_r),
            macro_f1: Some(f1(macro_p, macro_r)),
            mrr: Some(mrr(scores, &golds)),
            calibration: None,
        };
        Ok(Self { summary, per_example })
    }

    /// Summary object on the first line, one record per following line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.summary).expect("serializable summary");
        out.push('\n');
        for r in &self.per_example {
            out.push_str(&serde_json::to_string(r).expect("serializable record"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, e: serde_json::Error| Error::Parse { line: line + 1, message: e.to_string() };
        let (n, first) = lines.next().ok_or(Error::Parse { line: 1, message: "empty report".into() })?;
        let summary: EvalSummary = serde_json::from_str(first).map_err(|e| parse_err(n, e))?;
        let per_example = lines
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| parse_err(n, e)))
            .collect::<Result<Vec<ExampleRecord>>>()?;
        Ok(Self { summary, per_example })
    }

    /// Histogram as CSV with `bin_left,bin_right,count` rows.
    pub fn histogram_csv(&self, k: usize) -> String {
        histogram_csv(&self.summary.entropy_histogram, (k as f64).ln())
    }
}

pub fn histogram_csv(counts: &[usize], upper: f64) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for ((l, r), c) in bin_edges(counts.len(), upper).into_iter().zip(counts) {
        out.push_str(&format!("{l},{r},{c}\n"));
    }
    out
}

fn check_lengths(preds: usize, examples: usize) -> Result<()> {
    if preds != examples {
        return Err(Error::ShapeMismatch { expected: examples, got: preds });
    }
    Ok(())
}

/// Mean entropy of a set of distributions.
pub fn mean_entropy(dists: &[Vec<f64>]) -> f64 {
    mean(dists.iter().map(|d| entropy(d)))
}

/// L1 distance between two histograms normalized to unit mass.
pub fn histogram_l1(a: &[usize], b: &[usize]) -> f64 {
    let ta: usize = a.iter().sum();
    let tb: usize = b.iter().sum();
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / ta.max(1) as f64 - y as f64 / tb.max(1) as f64).abs())
        .sum()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = mean(values.iter().copied());
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}
