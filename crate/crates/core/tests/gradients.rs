mod common;

use common::{fd_grad, naive_loss, rel_err};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uneven::corpus::LabelDistribution;
use uneven::model::{grad_batch, AdamConfig, AdamState, Architecture, ClassifierParams, Head, Objective, Sample};
use uneven::strategies::{build_terms, composite_loss_grad, pseudo_target, SetBatches, StrategyKind};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const INSTANCES: u64 = 25;

fn random_arch(rng: &mut ChaCha8Rng, head: Head) -> Architecture {
    let d_in = rng.random_range(2..6);
    let hidden = match rng.random_range(0..3) {
        0 => vec![],
        1 => vec![rng.random_range(2..7)],
        _ => vec![rng.random_range(2..5), rng.random_range(2..5)],
    };
    let n_out = rng.random_range(2..6);
    Architecture::new(d_in, hidden, n_out, head)
}

fn random_x(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn random_dist(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

#[test]
fn soft_ce_matches_finite_differences() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = random_arch(&mut rng, Head::Softmax);
        let params = ClassifierParams::xavier(arch.clone(), seed);
        let batch: Vec<Sample> = (0..rng.random_range(1..9))
            .map(|_| Sample::new(random_x(&mut rng, arch.d_in), random_dist(&mut rng, arch.n_out)))
            .collect();
        let obj = Objective::SoftCrossEntropy;
        let (loss, grad) = grad_batch(&params, &batch, obj).unwrap();
        let oracle = naive_loss(&arch, params.values(), &batch, obj);
        assert!((loss - oracle).abs() < 1e-12, "seed {seed}: {loss} vs {oracle}");
        let fd = fd_grad(params.values(), H, |v| naive_loss(&arch, v, &batch, obj));
        let err = rel_err(&grad, &fd);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn weighted_bce_matches_finite_differences() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let arch = random_arch(&mut rng, Head::Sigmoid);
        let params = ClassifierParams::xavier(arch.clone(), seed);
        let batch: Vec<Sample> = (0..rng.random_range(1..9))
            .map(|_| {
                let y = (0..arch.n_out).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
                Sample::new(random_x(&mut rng, arch.d_in), y)
            })
            .collect();
        let obj = Objective::WeightedBce { w_neg: rng.random_range(0.05..1.0) };
        let (loss, grad) = grad_batch(&params, &batch, obj).unwrap();
        let oracle = naive_loss(&arch, params.values(), &batch, obj);
        assert!((loss - oracle).abs() < 1e-12, "seed {seed}: {loss} vs {oracle}");
        let fd = fd_grad(params.values(), H, |v| naive_loss(&arch, v, &batch, obj));
        let err = rel_err(&grad, &fd);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

/// The full three-set MixUp objective with fixed coefficients and pseudo
/// targets, recomputed from the raw batches and the recorded pairings.
#[test]
fn mixup_objective_matches_finite_differences() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let arch = random_arch(&mut rng, Head::Softmax);
        let (d, k) = (arch.d_in, arch.n_out);
        let params = ClassifierParams::xavier(arch.clone(), seed);
        let n = rng.random_range(2..7);
        let singles: Vec<Sample> = (0..n)
            .map(|_| Sample::new(random_x(&mut rng, d), LabelDistribution::one_hot(k, rng.random_range(0..k)).into_vec()))
            .collect();
        let multis: Vec<Sample> = (0..n).map(|_| Sample::new(random_x(&mut rng, d), random_dist(&mut rng, k))).collect();
        let unlabeled: Vec<Sample> = (0..n)
            .map(|_| {
                let x = random_x(&mut rng, d);
                let y = pseudo_target(&params, &x).unwrap();
                Sample::new(x, y)
            })
            .collect();
        let batches = SetBatches { singles, multis, unlabeled };
        let alpha = rng.random_range(0.0..2.0);
        let terms = build_terms(StrategyKind::MixupSmu.mixup_terms(), &batches, alpha, |r| r.random(), &mut rng).unwrap();
        let (loss, grad) = composite_loss_grad(&params, &terms, Objective::SoftCrossEntropy).unwrap();

        let sets = |t: uneven::strategies::Term| {
            use uneven::strategies::Term::*;
            match t {
                Ss => (&batches.singles, &batches.singles),
                Mm => (&batches.multis, &batches.multis),
                Sm => (&batches.singles, &batches.multis),
                Su => (&batches.singles, &batches.unlabeled),
                Mu => (&batches.multis, &batches.unlabeled),
            }
        };
        let mixed: Vec<(f64, Vec<Sample>)> = terms
            .iter()
            .map(|t| {
                let (l, r) = sets(t.term);
                let w = if t.term.is_cross() { alpha } else { 1.0 };
                let lam = t.lambda;
                let samples = t
                    .pairs
                    .iter()
                    .map(|&(i, j)| {
                        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
                        Sample::new(mix(&l[i].x, &r[j].x), mix(&l[i].y, &r[j].y))
                    })
                    .collect();
                (w, samples)
            })
            .collect();
        let objective = |v: &[f64]| -> f64 {
            mixed.iter().map(|(w, s)| w * naive_loss(&arch, v, s, Objective::SoftCrossEntropy)).sum()
        };
        let oracle = objective(params.values());
        assert!((loss.total - oracle).abs() < 1e-11, "seed {seed}: {} vs {oracle}", loss.total);
        let err = rel_err(&grad, &fd_grad(params.values(), H, objective));
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn adam_fits_separable_unanimous_corpus() {
    let arch = Architecture::new(4, vec![8], 3, Head::Softmax);
    let mut params = ClassifierParams::xavier(arch, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch: Vec<Sample> = (0..60)
        .map(|i| {
            let c = i % 3;
            let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
            x[c] += 2.0;
            Sample::new(x, LabelDistribution::one_hot(3, c).into_vec())
        })
        .collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(1e-2), params.values().len());
    let mut reached = None;
    for step in 0..2000 {
        let (loss, g) = grad_batch(&params, &batch, Objective::SoftCrossEntropy).unwrap();
        if loss < 0.05 {
            reached = Some(step);
            break;
        }
        adam.step(&mut params, &g).unwrap();
    }
    assert!(reached.is_some(), "training CE stayed above 0.05 after 2000 steps");
}
