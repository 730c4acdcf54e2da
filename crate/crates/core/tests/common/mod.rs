#![allow(dead_code)]

use uneven::model::{Architecture, Head, Objective, Sample};

/// Forward pass written directly from the parameter layout: per layer a
/// row-major `out x in` weight matrix followed by `out` biases, tanh between
/// layers.
pub fn naive_logits(arch: &Architecture, values: &[f64], x: &[f64]) -> Vec<f64> {
    let mut dims = vec![arch.d_in];
    dims.extend(&arch.hidden);
    dims.push(arch.n_out);
    let mut h = x.to_vec();
    let mut off = 0;
    for l in 0..dims.len() - 1 {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &values[off..off + n_in * n_out];
        let b = &values[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut z: Vec<f64> = (0..n_out)
            .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * h[i]).sum::<f64>())
            .collect();
        if l + 2 < dims.len() {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        h = z;
    }
    h
}

pub fn naive_probs(arch: &Architecture, values: &[f64], x: &[f64]) -> Vec<f64> {
    let z = naive_logits(arch, values, x);
    match arch.head {
        Head::Softmax => {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        }
        Head::Sigmoid => z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
    }
}

/// Mean loss of `batch`, from the loss definitions alone.
pub fn naive_loss(arch: &Architecture, values: &[f64], batch: &[Sample], objective: Objective) -> f64 {
    let per: f64 = batch
        .iter()
        .map(|s| {
            let p = naive_probs(arch, values, &s.x);
            match objective {
                Objective::SoftCrossEntropy => -p.iter().zip(&s.y).map(|(p, t)| t * p.ln()).sum::<f64>(),
                Objective::WeightedBce { w_neg } => {
                    -p.iter().zip(&s.y).map(|(p, y)| y * p.ln() + w_neg * (1.0 - y) * (1.0 - p).ln()).sum::<f64>()
                        / p.len() as f64
                }
            }
        })
        .sum();
    per / batch.len() as f64
}

/// Central differences with step `h`.
pub fn fd_grad(values: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut v = values.to_vec();
    (0..v.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + h;
            let up = f(&v);
            v[i] = orig - h;
            let down = f(&v);
            v[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` over whole vectors.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-300)
}

/// Digamma by recurrence up to 6 and the asymptotic series beyond.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x - x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 / 132.0))))
}

/// Expected Shannon entropy (nats) of a Dirichlet(alpha) draw.
pub fn dirichlet_expected_entropy(alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    digamma(a0 + 1.0) - alpha.iter().map(|a| a / a0 * digamma(a + 1.0)).sum::<f64>()
}
