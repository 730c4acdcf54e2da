//! Feed-forward classifier heads over fixed feature vectors, soft-target
//! losses with exact backpropagation, and Adam.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{argmax, LabelDistribution, LabelVocab};
use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Probability floor applied before taking logs of model outputs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Examples per work unit when accumulating batch gradients.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One distribution over mutually exclusive labels.
    Softmax,
    /// Independent membership score per type.
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub d_in: usize,
    pub hidden: Vec<usize>,
    pub n_out: usize,
    pub head: Head,
}

impl Architecture {
    pub fn new(d_in: usize, hidden: Vec<usize>, n_out: usize, head: Head) -> Self {
        Self { d_in, hidden, n_out, head }
    }

    /// `(fan_in, fan_out)` of every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.d_in;
        for &h in self.hidden.iter().chain(std::iter::once(&self.n_out)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter vector of a multilayer perceptron with tanh hidden units.
///
/// Each layer stores its `fan_out x fan_in` weight matrix row-major followed
/// by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    arch: Architecture,
    values: Vec<f64>,
}

struct Layer<'a> {
    w: &'a [f64],
    b: &'a [f64],
    fan_in: usize,
}

impl ClassifierParams {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.n_params();
        Self { arch, values: vec![0.0; n] }
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(arch.n_params());
        for (fan_in, fan_out) in arch.layer_dims() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { arch, values }
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.n_params() {
            return Err(Error::ShapeMismatch { expected: arch.n_params(), got: values.len() });
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Offset of each layer's bias block in the flat vector.
    pub fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let mut off = 0;
        for (l, (i, o)) in self.arch.layer_dims().into_iter().enumerate() {
            off += i * o;
            if l == layer {
                return off..off + o;
            }
            off += o;
        }
        panic!("layer {layer} out of range");
    }

    fn layers(&self) -> Vec<Layer<'_>> {
        let mut out = Vec::new();
        let mut rest = self.values.as_slice();
        for (fan_in, fan_out) in self.arch.layer_dims() {
            let (w, r) = rest.split_at(fan_in * fan_out);
            let (b, r) = r.split_at(fan_out);
            out.push(Layer { w, b, fan_in });
            rest = r;
        }
        out
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.d_in {
            return Err(Error::ShapeMismatch { expected: self.arch.d_in, got: x.len() });
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut out: Vec<f64> = layer
                .b
                .iter()
                .enumerate()
                .map(|(o, &b)| {
                    let row = &layer.w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>()
                })
                .collect();
            if l + 1 < layers.len() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).pop().unwrap())
    }

    pub fn forward_softmax(&self, x: &[f64]) -> Result<LabelDistribution> {
        Ok(LabelDistribution::from_vec_unchecked(softmax(&self.logits(x)?)))
    }

    pub fn forward_multilabel(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }

    /// Output of the configured head: a distribution for softmax heads,
    /// per-type scores for sigmoid heads.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.arch.head {
            Head::Softmax => self.forward_softmax(x).map(LabelDistribution::into_vec),
            Head::Sigmoid => self.forward_multilabel(x),
        }
    }
}

/// Head outputs for every feature vector, in order.
pub fn predict_all(params: &ClassifierParams, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    predict_all_with(Exec::default(), params, xs)
}

pub fn predict_all_with(exec: Exec, params: &ClassifierParams, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    par::map_collect(exec, xs, |x| params.predict(x)).into_iter().collect()
}

/// Logits for every feature vector, in order.
pub fn logits_all(params: &ClassifierParams, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    par::map_collect(Exec::default(), xs, |x| params.logits(x)).into_iter().collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `-sum_c target_c * ln(pred_c)` with `pred` floored at [`PROB_FLOOR`].
pub fn soft_cross_entropy(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.max(PROB_FLOOR).ln())
        .sum()
}

/// Mean over types of binary cross-entropy against `targets` in `[0, 1]`,
/// with the negative part of each term scaled by `w_neg`.
pub fn multilabel_bce(scores: &[f64], targets: &[f64], w_neg: f64) -> f64 {
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &y)| {
            let s = s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            -(y * s.ln() + w_neg * (1.0 - y) * (1.0 - s).ln())
        })
        .sum::<f64>()
        / n
}

/// Multi-hot target vector over `n` types.
pub fn multi_hot(n: usize, positives: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &p in positives {
        v[p] = 1.0;
    }
    v
}

/// Types scoring above `threshold`, or the single best type if none do.
pub fn predict_types(scores: &[f64], threshold: f64) -> Vec<usize> {
    let picked: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| i)
        .collect();
    if picked.is_empty() {
        vec![argmax(scores)]
    } else {
        picked
    }
}

/// Training loss attached to a head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    SoftCrossEntropy,
    WeightedBce { w_neg: f64 },
}

impl Objective {
    pub const DEFAULT_W_NEG: f64 = 0.1;

    pub fn for_head(head: Head) -> Self {
        match head {
            Head::Softmax => Objective::SoftCrossEntropy,
            Head::Sigmoid => Objective::WeightedBce { w_neg: Self::DEFAULT_W_NEG },
        }
    }

    /// Loss and its derivative with respect to the logits, computed in logit
    /// space.
    fn loss_and_delta(&self, logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        match *self {
            Objective::SoftCrossEntropy => {
                let lse = log_sum_exp(logits);
                let mass: f64 = target.iter().sum();
                let loss = target.iter().zip(logits).map(|(t, z)| t * (lse - z)).sum();
                let p = softmax(logits);
                let delta = p.iter().zip(target).map(|(p, t)| p * mass - t).collect();
                (loss, delta)
            }
            Objective::WeightedBce { w_neg } => {
                let n = logits.len() as f64;
                let mut loss = 0.0;
                let delta = logits
                    .iter()
                    .zip(target)
                    .map(|(&z, &y)| {
                        loss += y * softplus(-z) + w_neg * (1.0 - y) * softplus(z);
                        let s = sigmoid(z);
                        (-y * (1.0 - s) + w_neg * (1.0 - y) * s) / n
                    })
                    .collect();
                (loss / n, delta)
            }
        }
    }
}

/// A feature vector with its (possibly soft) target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }
}

/// Mean loss over `batch`.
pub fn batch_loss(params: &ClassifierParams, batch: &[Sample], objective: Objective) -> Result<f64> {
    let (loss, _) = accumulate(Exec::default(), params, batch, objective, false)?;
    Ok(loss)
}

/// Mean loss over `batch` and its exact gradient with respect to every
/// parameter.
pub fn grad_batch(params: &ClassifierParams, batch: &[Sample], objective: Objective) -> Result<(f64, Vec<f64>)> {
    grad_batch_with(Exec::default(), params, batch, objective)
}

pub fn grad_batch_with(
    exec: Exec,
    params: &ClassifierParams,
    batch: &[Sample],
    objective: Objective,
) -> Result<(f64, Vec<f64>)> {
    accumulate(exec, params, batch, objective, true)
}

fn accumulate(
    exec: Exec,
    params: &ClassifierParams,
    batch: &[Sample],
    objective: Objective,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("gradient of an empty batch".into()));
    }
    for s in batch {
        params.check_input(&s.x)?;
        if s.y.len() != params.arch.n_out {
            return Err(Error::ShapeMismatch { expected: params.arch.n_out, got: s.y.len() });
        }
    }
    let n_params = if with_grad { params.values.len() } else { 0 };
    let partials = par::map_chunks(exec, batch, GRAD_CHUNK, |chunk| {
        let mut grad = vec![0.0; n_params];
        let mut loss = 0.0;
        for s in chunk {
            loss += backprop(params, s, objective, with_grad.then_some(&mut grad[..]));
        }
        (loss, grad)
    });
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Adds one example's gradient into `grad` and returns its loss.
fn backprop(params: &ClassifierParams, sample: &Sample, objective: Objective, grad: Option<&mut [f64]>) -> f64 {
    let acts = params.activations(&sample.x);
    let (loss, mut delta) = objective.loss_and_delta(acts.last().unwrap(), &sample.y);
    let Some(grad) = grad else {
        return loss;
    };

    let dims = params.arch.layer_dims();
    let layers = params.layers();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut off = 0;
    for (i, o) in &dims {
        offsets.push(off);
        off += i * o + o;
    }
    for l in (0..layers.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let input = &acts[l];
        let base = offsets[l];
        for o in 0..fan_out {
            let d = delta[o];
            let row = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
            row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
            grad[base + fan_in * fan_out + o] += d;
        }
        if l > 0 {
            let w = layers[l].w;
            delta = (0..fan_in)
                .map(|i| {
                    let back: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                    back * (1.0 - input[i] * input[i])
                })
                .collect();
        }
    }
    loss
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_eps() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self { config, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: &mut ClassifierParams, grads: &[f64]) -> Result<()> {
        let n = params.values.len();
        if grads.len() != n || self.m.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: grads.len().min(self.m.len()) });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params.values.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

/// Short stable digest of a vocabulary's label names and order.
pub fn vocab_hash(vocab: &LabelVocab) -> String {
    let digest = Sha256::digest(vocab.names().join("\n").as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

const CHECKPOINT_MAGIC: &str = "uneven-checkpoint 1";

/// Trained parameters plus the metadata needed to reuse them.
///
/// Text format, one item per line:
///
/// ```text
/// uneven-checkpoint 1
/// head softmax|sigmoid
/// d_in <int>
/// hidden <int> <int> ...
/// n_out <int>
/// vocab_hash <hex>
/// seed <int>
/// values <count>
/// <f64>            (one per line, shortest round-trip decimal)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ClassifierParams,
    pub vocab_hash: String,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let arch = self.params.arch();
        let mut s = String::new();
        let head = match arch.head {
            Head::Softmax => "softmax",
            Head::Sigmoid => "sigmoid",
        };
        let hidden: Vec<String> = arch.hidden.iter().map(ToString::to_string).collect();
        writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
        writeln!(s, "head {head}").unwrap();
        writeln!(s, "d_in {}", arch.d_in).unwrap();
        writeln!(s, "hidden {}", hidden.join(" ")).unwrap();
        writeln!(s, "n_out {}", arch.n_out).unwrap();
        writeln!(s, "vocab_hash {}", self.vocab_hash).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "values {}", self.params.values().len()).unwrap();
        for v in self.params.values() {
            writeln!(s, "{v:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header line".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| bad(format!("expected {key}, found {line:?}")))?;
            Ok(rest.trim().to_string())
        };
        let head = match field("head")?.as_str() {
            "softmax" => Head::Softmax,
            "sigmoid" => Head::Sigmoid,
            other => return Err(bad(format!("unknown head {other:?}"))),
        };
        let int = |s: String| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        let d_in = int(field("d_in")?)?;
        let hidden = field("hidden")?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| bad(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let n_out = int(field("n_out")?)?;
        let vocab_hash = field("vocab_hash")?;
        let seed = field("seed")?.parse::<u64>().map_err(|e| bad(e.to_string()))?;
        let count = int(field("values")?)?;
        let values = lines
            .map(|l| l.trim().parse::<f64>().map_err(|e| bad(format!("{l:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != count {
            return Err(bad(format!("header announces {count} values, found {}", values.len())));
        }
        let params = ClassifierParams::from_values(Architecture::new(d_in, hidden, n_out, head), values)?;
        Ok(Self { params, vocab_hash, seed })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
