use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uneven::calibrate::{
    max_smoothing, pred_smoothed_all, temp_scaled_all, tune_entropy_match, tune_scalar, CalibrationConfig,
    CalibrationMethod, TuneResult, ENTROPY_TOL,
};
use uneven::corpus::{
    allocate_budget, generate_synthetic_pool, load_corpus, load_vocab, save_corpus, save_vocab, AnnotatedExample,
    BudgetPlan, CorpusSplit, LabelVocab,
};
use uneven::metrics::{entropy, mean_entropy, mean_std, CalibrationRecord, EvalReport};
use uneven::model::{logits_all, predict_all, vocab_hash, Checkpoint, ClassifierParams};
use uneven::par::{map_collect, Exec};
use uneven::strategies::{make_targets, run_strategy, StrategySpec, TargetMode, Task, TrainLog};

use crate::config::ExperimentConfig;

/// Offset between the synthetic pool seed and its evaluation set seed.
const EVAL_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Smoothing masses scanned before bisecting when tuning by retraining.
const TRAIN_SMOOTHING_SCAN: usize = 5;

pub const CHECKPOINT: &str = "checkpoint.txt";
pub const TRAINLOG: &str = "trainlog.tsv";
pub const REPORT: &str = "report.jsonl";
pub const HISTOGRAM: &str = "histogram.csv";
pub const MANIFEST: &str = "manifest.json";
pub const CALIBRATED_REPORT: &str = "calibrated_report.jsonl";
pub const CALIBRATED_HISTOGRAM: &str = "calibrated_histogram.csv";
pub const CALIBRATED_CHECKPOINT: &str = "calibrated_checkpoint.txt";
pub const SUMMARY: &str = "summary.json";

/// Training pool, evaluation set and their label vocabulary.
#[derive(Debug, Clone)]
pub struct Data {
    pub vocab: LabelVocab,
    pub pool: Vec<AnnotatedExample>,
    pub eval: Vec<AnnotatedExample>,
}

/// Label counts of a realized split, written next to the split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub plan: BudgetPlan,
    pub formula: String,
    pub total_labels: usize,
    pub n_single: usize,
    pub n_multi: usize,
    pub n_unlabeled: usize,
}

impl Manifest {
    pub fn new(plan: &BudgetPlan, split: &CorpusSplit, seed: u64) -> Self {
        Self {
            seed,
            plan: plan.clone(),
            formula: plan.formula(),
            total_labels: split.total_labels(),
            n_single: split.singles.len(),
            n_multi: split.multis.len(),
            n_unlabeled: split.unlabeled.len(),
        }
    }
}

/// Mean and sample standard deviation of one metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl SweepSummary {
    /// Metric table, one row per metric.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tmean\tstd\tn\n");
        for (name, m) in &self.metrics {
            s.push_str(&format!("{name}\t{:.6}\t{:.6}\t{}\n", m.mean, m.std, m.values.len()));
        }
        s
    }
}

/// A configuration bound to its output directory `<out>/<config-hash>`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub root: PathBuf,
    exec: Exec,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

impl Experiment {
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let root = out.unwrap_or_else(|| config.out.clone()).join(&hash);
        Ok(Self { config, hash, root, exec: Exec::default() })
    }

    pub fn load(path: impl AsRef<Path>, out: Option<PathBuf>) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?, out)
    }

    /// Runs seed sweeps on the calling thread.
    pub fn sequential(mut self) -> Self {
        self.exec = Exec::Sequential;
        self
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(seed.to_string())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    /// The seeds to run: the override if given, else the configured list.
    pub fn seeds(&self, over: Option<u64>) -> Vec<u64> {
        over.map(|s| vec![s]).unwrap_or_else(|| self.config.seeds.clone())
    }

    fn n_labels(&self, data: &Data) -> usize {
        data.vocab.len()
    }

    pub fn data(&self) -> Result<Data> {
        let c = &self.config.corpus;
        if let Some(syn) = &c.synthetic {
            let pool = generate_synthetic_pool(syn)?;
            let eval_cfg = uneven::corpus::SyntheticConfig {
                n_examples: c.n_eval.unwrap_or(0),
                seed: syn.seed.wrapping_add(EVAL_SEED_OFFSET),
                uid_prefix: format!("{}eval", syn.uid_prefix),
                ..syn.clone()
            };
            let eval = generate_synthetic_pool(&eval_cfg)?;
            return Ok(Data { vocab: syn.vocab(), pool, eval });
        }
        let vocab = match &c.vocab {
            Some(p) => load_vocab(p)?,
            None => LabelVocab::nli(),
        };
        let train = c.train.as_ref().expect("validated");
        let eval = c.eval.as_ref().expect("validated");
        Ok(Data { pool: load_corpus(train, &vocab)?, eval: load_corpus(eval, &vocab)?, vocab })
    }

    /// Writes the pool, evaluation set and vocabulary under `data/`.
    pub fn gen(&self) -> Result<Vec<PathBuf>> {
        if self.config.corpus.synthetic.is_none() {
            bail!(uneven::Error::InvalidConfig("gen needs a synthetic corpus".into()));
        }
        let data = self.data()?;
        let dir = self.data_dir();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let paths = [dir.join("pool.jsonl"), dir.join("eval.jsonl"), dir.join("vocab.txt")];
        save_corpus(&data.pool, &data.vocab, &paths[0])?;
        save_corpus(&data.eval, &data.vocab, &paths[1])?;
        save_vocab(&data.vocab, &paths[2])?;
        Ok(paths.to_vec())
    }

    fn allocate(&self, data: &Data, seed: u64) -> Result<CorpusSplit> {
        let split = allocate_budget(&data.pool, &self.config.plan, seed)?;
        split.check(&self.config.plan)?;
        Ok(split)
    }

    /// Allocates the budget and writes the three sets and the manifest.
    pub fn split(&self, seed: u64) -> Result<Manifest> {
        let data = self.data()?;
        self.split_with(&data, seed).map(|(_, m)| m)
    }

    fn split_with(&self, data: &Data, seed: u64) -> Result<(CorpusSplit, Manifest)> {
        let split = self.allocate(data, seed)?;
        let dir = self.seed_dir(seed).join("split");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        save_corpus(&split.singles, &data.vocab, dir.join("singles.jsonl"))?;
        save_corpus(&split.multis, &data.vocab, dir.join("multis.jsonl"))?;
        save_corpus(&split.unlabeled, &data.vocab, dir.join("unlabeled.jsonl"))?;
        let manifest = Manifest::new(&self.config.plan, &split, seed);
        write(&self.seed_dir(seed).join(MANIFEST), json_line(&manifest))?;
        Ok((split, manifest))
    }

    fn spec(&self, seed: u64) -> StrategySpec {
        StrategySpec { seed, ..self.config.strategy.clone() }
    }

    fn fixed_train_smoothing(&self) -> Option<f64> {
        match self.config.calibration {
            Some(CalibrationConfig { method: CalibrationMethod::TrainSmoothing, scalar: Some(a), .. }) => Some(a),
            _ => None,
        }
    }

    /// Trains on the seed's split; writes the checkpoint and training log.
    pub fn train(&self, seed: u64) -> Result<(ClassifierParams, TrainLog)> {
        let data = self.data()?;
        self.train_with(&data, seed)
    }

    fn train_with(&self, data: &Data, seed: u64) -> Result<(ClassifierParams, TrainLog)> {
        let (split, _) = self.split_with(data, seed)?;
        let mut spec = self.spec(seed);
        if spec.train_smoothing.is_none() {
            spec.train_smoothing = self.fixed_train_smoothing();
        }
        let (params, log) = run_strategy(&spec, &split, self.config.task, self.n_labels(data))?;
        let dir = self.seed_dir(seed);
        let ckpt = Checkpoint { params: params.clone(), vocab_hash: vocab_hash(&data.vocab), seed };
        ckpt.save(dir.join(CHECKPOINT))?;
        write(&dir.join(TRAINLOG), log.to_tsv())?;
        Ok((params, log))
    }

    fn load_checkpoint(&self, data: &Data, seed: u64, name: &str) -> Result<ClassifierParams> {
        let path = self.seed_dir(seed).join(name);
        if !path.exists() {
            bail!(uneven::Error::Checkpoint(format!("{} not found; run `train` for seed {seed} first", path.display())));
        }
        let ckpt = Checkpoint::load(&path)?;
        if ckpt.vocab_hash != vocab_hash(&data.vocab) {
            bail!(uneven::Error::Checkpoint(format!("{} was trained with a different vocabulary", path.display())));
        }
        Ok(ckpt.params)
    }

    fn features(examples: &[AnnotatedExample]) -> Vec<Vec<f64>> {
        examples.iter().map(|e| e.features.clone()).collect()
    }

    fn report(&self, preds: &[Vec<f64>], eval: &[AnnotatedExample]) -> Result<EvalReport> {
        let opts = &self.config.eval;
        Ok(match self.config.task {
            Task::Distribution => EvalReport::distribution(preds, eval, opts)?,
            Task::Typing => EvalReport::typing(preds, eval, opts)?,
        })
    }

    fn write_report(&self, seed: u64, report: &EvalReport, k: usize, names: (&str, &str)) -> Result<()> {
        let dir = self.seed_dir(seed);
        write(&dir.join(names.0), report.to_jsonl())?;
        write(&dir.join(names.1), report.histogram_csv(k))
    }

    /// Evaluates the seed's checkpoint; writes the report and histogram.
    pub fn eval(&self, seed: u64) -> Result<EvalReport> {
        let data = self.data()?;
        self.eval_with(&data, seed)
    }

    fn eval_with(&self, data: &Data, seed: u64) -> Result<EvalReport> {
        let params = self.load_checkpoint(data, seed, CHECKPOINT)?;
        let preds = predict_all(&params, &Self::features(&data.eval))?;
        let report = self.report(&preds, &data.eval)?;
        self.write_report(seed, &report, self.n_labels(data), (REPORT, HISTOGRAM))?;
        Ok(report)
    }

    fn target_entropy(&self, cal: &CalibrationConfig, data: &Data) -> Result<f64> {
        if let Some(t) = cal.target_entropy {
            return Ok(t);
        }
        let k = self.n_labels(data);
        let refs = data
            .eval
            .iter()
            .map(|e| e.reference_distribution(k).map(|d| entropy(d.probs())))
            .collect::<uneven::Result<Vec<_>>>()?;
        Ok(refs.iter().sum::<f64>() / refs.len().max(1) as f64)
    }

    /// Applies the configured calibration to the seed's checkpoint; writes
    /// the calibrated report and histogram.
    pub fn calibrate(&self, seed: u64) -> Result<EvalReport> {
        let data = self.data()?;
        self.calibrate_with(&data, seed)
    }

    fn calibrate_with(&self, data: &Data, seed: u64) -> Result<EvalReport> {
        let Some(cal) = self.config.calibration else {
            bail!(uneven::Error::InvalidConfig("no [calibration] section".into()));
        };
        if self.config.task != Task::Distribution {
            bail!(uneven::Error::InvalidConfig("calibration applies to the distribution task".into()));
        }
        let target = self.target_entropy(&cal, data)?;
        let xs = Self::features(&data.eval);
        let params = self.load_checkpoint(data, seed, CHECKPOINT)?;
        let base = predict_all(&params, &xs)?;
        let pre_entropy = mean_entropy(&base);
        let fixed = |s: f64, h: f64| TuneResult { scalar: s, achieved_entropy: h, at_boundary: false };

        let (preds, tuned) = match cal.method {
            CalibrationMethod::TempScaling => {
                let logits = logits_all(&params, &xs)?;
                let tuned = match cal.scalar {
                    Some(t) => fixed(t, mean_entropy(&temp_scaled_all(&logits, t)?)),
                    None => tune_entropy_match(cal.method, &logits, target)?,
                };
                (temp_scaled_all(&logits, tuned.scalar)?, tuned)
            }
            CalibrationMethod::PredSmoothing => {
                let tuned = match cal.scalar {
                    Some(a) => fixed(a, mean_entropy(&pred_smoothed_all(&base, a)?)),
                    None => tune_entropy_match(cal.method, &base, target)?,
                };
                (pred_smoothed_all(&base, tuned.scalar)?, tuned)
            }
            CalibrationMethod::TrainSmoothing => {
                let (split, _) = self.split_with(data, seed)?;
                let k = self.n_labels(data);
                let retrain = |a: f64| -> uneven::Result<(ClassifierParams, Vec<Vec<f64>>)> {
                    let spec = StrategySpec { train_smoothing: Some(a), ..self.spec(seed) };
                    let (p, _) = run_strategy(&spec, &split, self.config.task, k)?;
                    let preds = predict_all(&p, &xs)?;
                    Ok((p, preds))
                };
                let tuned = match cal.scalar {
                    Some(a) => fixed(a, mean_entropy(&retrain(a)?.1)),
                    None => {
                        let mode = self.config.strategy.target_mode.unwrap_or(TargetMode::for_task(self.config.task));
                        let targets = make_targets(&split, mode, k, None)?;
                        let ys: Vec<Vec<f64>> =
                            targets.singles.iter().chain(&targets.multis).map(|s| s.y.clone()).collect();
                        let hi = max_smoothing(&ys);
                        tune_scalar(0.0, hi, false, TRAIN_SMOOTHING_SCAN, target, ENTROPY_TOL, |a| {
                            retrain(a).map(|(_, p)| mean_entropy(&p))
                        })?
                    }
                };
                let (p, preds) = retrain(tuned.scalar)?;
                let ckpt = Checkpoint { params: p, vocab_hash: vocab_hash(&data.vocab), seed };
                ckpt.save(self.seed_dir(seed).join(CALIBRATED_CHECKPOINT))?;
                (preds, tuned)
            }
        };
        let mut report = self.report(&preds, &data.eval)?;
        report.summary.calibration = Some(CalibrationRecord {
            method: cal.method.name().to_string(),
            scalar: tuned.scalar,
            target_entropy: target,
            pre_entropy,
            post_entropy: report.summary.mean_pred_entropy,
            at_boundary: tuned.at_boundary,
        });
        self.write_report(seed, &report, self.n_labels(data), (CALIBRATED_REPORT, CALIBRATED_HISTOGRAM))?;
        Ok(report)
    }

    /// Train, evaluate and (if configured) calibrate one seed.
    pub fn run_seed(&self, seed: u64) -> Result<EvalReport> {
        let data = self.data()?;
        self.run_seed_with(&data, seed)
    }

    fn run_seed_with(&self, data: &Data, seed: u64) -> Result<EvalReport> {
        self.train_with(data, seed)?;
        let report = self.eval_with(data, seed)?;
        if self.config.calibration.is_some() {
            self.calibrate_with(data, seed)?;
        }
        Ok(report)
    }

    /// Runs every seed (in parallel when enabled), then summarizes.
    pub fn sweep(&self, seeds: &[u64]) -> Result<SweepSummary> {
        let data = self.data()?;
        let results = map_collect(self.exec, seeds, |&s| self.run_seed_with(&data, s).map(|_| ()));
        for (seed, r) in seeds.iter().zip(results) {
            r.with_context(|| format!("seed {seed}"))?;
        }
        self.summarize(seeds)
    }

    /// Summarizes the reports of `seeds` into `summary.json`.
    pub fn summarize(&self, seeds: &[u64]) -> Result<SweepSummary> {
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for &seed in seeds {
            let dir = self.seed_dir(seed);
            for (file, prefix) in [(REPORT, ""), (CALIBRATED_REPORT, "calibrated_")] {
                let path = dir.join(file);
                if !path.exists() {
                    if file == REPORT {
                        bail!(uneven::Error::InvalidConfig(format!(
                            "{} not found; run `eval` for seed {seed} first",
                            path.display()
                        )));
                    }
                    continue;
                }
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let report = EvalReport::from_jsonl(&text)?;
                for (name, v) in summary_metrics(&report) {
                    columns.entry(format!("{prefix}{name}")).or_default().push(v);
                }
            }
        }
        let metrics = columns
            .into_iter()
            .map(|(name, values)| {
                let (mean, std) = mean_std(&values);
                (name, MetricSummary { mean, std, values })
            })
            .collect();
        let summary = SweepSummary { config_hash: self.hash.clone(), seeds: seeds.to_vec(), metrics };
        write(&self.root.join(SUMMARY), json_line(&summary))?;
        Ok(summary)
    }

    /// Summarizes every seed directory that holds a report.
    pub fn report_all(&self) -> Result<SweepSummary> {
        let mut seeds = Vec::new();
        if let Ok(entries) = fs::read_dir(&self.root) {
            for entry in entries.flatten() {
                if let Some(seed) = entry.file_name().to_str().and_then(|n| n.parse::<u64>().ok()) {
                    if entry.path().join(REPORT).exists() {
                        seeds.push(seed);
                    }
                }
            }
        }
        if seeds.is_empty() {
            bail!(uneven::Error::InvalidConfig(format!("no reports under {}", self.root.display())));
        }
        seeds.sort_unstable();
        self.summarize(&seeds)
    }
}

fn summary_metrics(report: &EvalReport) -> Vec<(&'static str, f64)> {
    let s = &report.summary;
    let mut out = vec![("mean_pred_entropy", s.mean_pred_entropy)];
    let optional = [
        ("kl", s.kl),
        ("jsd", s.jsd),
        ("acc_old", s.acc_old),
        ("acc_new", s.acc_new),
        ("macro_p", s.macro_p),
        ("macro_r", s.macro_r),
        ("macro_f1", s.macro_f1),
        ("mrr", s.mrr),
    ];
    out.extend(optional.into_iter().filter_map(|(n, v)| v.map(|v| (n, v))));
    if let Some(c) = &s.calibration {
        out.push(("scalar", c.scalar));
    }
    out
}
