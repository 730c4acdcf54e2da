//! Post-hoc and training-time calibration with entropy-matched tuning.

use serde::{Deserialize, Serialize};

use crate::corpus::{argmax, LabelDistribution};
use crate::error::{Error, Result};
use crate::metrics::mean_entropy;
use crate::model::softmax;

/// Temperature search interval.
pub const TEMP_RANGE: (f64, f64) = (1e-3, 1e3);

/// Required agreement between achieved and target mean entropy, in nats.
pub const ENTROPY_TOL: f64 = 1e-3;

/// Bisection stops once this close; well inside [`ENTROPY_TOL`].
const BISECT_TOL: f64 = 1e-6;

const MAX_BISECT_ITERS: usize = 200;

/// Grid points scanned before bisecting, to locate the first bracket.
const SCAN_POINTS: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    TempScaling,
    PredSmoothing,
    TrainSmoothing,
}

impl CalibrationMethod {
    pub fn name(self) -> &'static str {
        match self {
            CalibrationMethod::TempScaling => "temp_scaling",
            CalibrationMethod::PredSmoothing => "pred_smoothing",
            CalibrationMethod::TrainSmoothing => "train_smoothing",
        }
    }
}

/// Calibration method with either a fixed scalar or an entropy target to tune
/// the scalar against. When neither is given the target defaults to the mean
/// entropy of the evaluation set's human label distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub method: CalibrationMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
}

/// `softmax(logits / t)`. Preserves the argmax for every `t > 0`.
pub fn temp_scale(logits: &[f64], t: f64) -> Result<LabelDistribution> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Calibration(format!("temperature must be positive, got {t}")));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / t).collect();
    Ok(LabelDistribution::from_vec_unchecked(softmax(&scaled)))
}

fn shift_mass(dist: &[f64], from: usize, alpha: f64, what: &str) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Calibration(format!("smoothing mass {alpha} outside [0, 1]")));
    }
    if alpha > dist[from] {
        return Err(Error::Calibration(format!(
            "smoothing mass {alpha} exceeds the {what} mass {}",
            dist[from]
        )));
    }
    let share = alpha / dist.len() as f64;
    let mut out: Vec<f64> = dist.iter().map(|p| p + share).collect();
    out[from] = dist[from] - alpha + share;
    Ok(out)
}

/// Moves `alpha` probability mass from the most probable label to all labels
/// equally.
pub fn pred_smooth(dist: &[f64], alpha: f64) -> Result<Vec<f64>> {
    shift_mass(dist, argmax(dist), alpha, "largest")
}

/// Moves `alpha` mass from the gold (most probable) label of a training
/// target to all labels equally.
pub fn train_smooth(target: &[f64], alpha: f64) -> Result<Vec<f64>> {
    shift_mass(target, argmax(target), alpha, "gold")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub scalar: f64,
    pub achieved_entropy: f64,
    /// The target lies outside the attainable range; `scalar` is the
    /// nearest end of the search interval.
    pub at_boundary: bool,
}

/// Finds `s` in `[lo, hi]` with `f(s)` within `tol` of `target`.
///
/// Scans `scan` points (log-spaced when `log_scale`) for the first bracket
/// where `f` crosses `target` from below, then bisects it. If no crossing
/// exists, returns the end of the interval nearer the target with
/// `at_boundary` set.
pub fn tune_scalar<F>(lo: f64, hi: f64, log_scale: bool, scan: usize, target: f64, tol: f64, mut f: F) -> Result<TuneResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let scan = scan.max(2);
    let point = |i: usize| {
        let t = i as f64 / (scan - 1) as f64;
        if log_scale {
            10f64.powf(lo.log10() + t * (hi.log10() - lo.log10()))
        } else {
            lo + t * (hi - lo)
        }
    };
    let mid = |a: f64, b: f64| if log_scale { (a * b).sqrt() } else { 0.5 * (a + b) };

    let mut prev = (lo, f(lo)?);
    if prev.1 >= target {
        return Ok(TuneResult { scalar: lo, achieved_entropy: prev.1, at_boundary: prev.1 - target > tol });
    }
    for i in 1..scan {
        let s = if i + 1 == scan { hi } else { point(i) };
        let h = f(s)?;
        if h >= target {
            let (mut a, mut b) = (prev.0, s);
            let mut best = if h - target < target - prev.1 { (s, h) } else { prev };
            for _ in 0..MAX_BISECT_ITERS {
                if (best.1 - target).abs() < tol {
                    break;
                }
                let m = mid(a, b);
                let hm = f(m)?;
                if (hm - target).abs() < (best.1 - target).abs() {
                    best = (m, hm);
                }
                if hm < target {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(TuneResult { scalar: best.0, achieved_entropy: best.1, at_boundary: false });
        }
        prev = (s, h);
    }
    Ok(TuneResult { scalar: hi, achieved_entropy: prev.1, at_boundary: true })
}

fn check_target(target: f64, k: usize) -> Result<()> {
    let max = (k as f64).ln();
    if !(0.0..=max + 1e-12).contains(&target) {
        return Err(Error::Calibration(format!("target entropy {target} outside [0, ln {k}]")));
    }
    Ok(())
}

pub fn temp_scaled_all(logits: &[Vec<f64>], t: f64) -> Result<Vec<Vec<f64>>> {
    logits.iter().map(|z| temp_scale(z, t).map(LabelDistribution::into_vec)).collect()
}

/// Tunes the temperature so that the mean entropy of the scaled predictions
/// matches `target` (nats).
pub fn tune_temperature(logits: &[Vec<f64>], target: f64) -> Result<TuneResult> {
    if logits.is_empty() {
        return Err(Error::Calibration("no predictions to calibrate".into()));
    }
    check_target(target, logits[0].len())?;
    let h = |t: f64| temp_scaled_all(logits, t).map(|d| mean_entropy(&d));

    // Mean entropy must not decrease with temperature above 1.
    let mut last = h(1.0)?;
    for i in 1..=10 {
        let t = 2f64.powi(i).min(TEMP_RANGE.1);
        let cur = h(t)?;
        if cur + 1e-12 < last {
            return Err(Error::Calibration(format!("mean entropy decreases between T = {} and T = {t}", t / 2.0)));
        }
        last = cur;
    }
    tune_scalar(TEMP_RANGE.0, TEMP_RANGE.1, true, SCAN_POINTS, target, BISECT_TOL, h)
}

/// Largest smoothing mass admissible for every distribution in `dists`.
pub fn max_smoothing(dists: &[Vec<f64>]) -> f64 {
    dists
        .iter()
        .map(|d| d[argmax(d)])
        .fold(1.0, f64::min)
}

pub fn pred_smoothed_all(dists: &[Vec<f64>], alpha: f64) -> Result<Vec<Vec<f64>>> {
    dists.iter().map(|d| pred_smooth(d, alpha)).collect()
}

/// Tunes the prediction-smoothing mass against `target` (nats).
pub fn tune_pred_smoothing(dists: &[Vec<f64>], target: f64) -> Result<TuneResult> {
    if dists.is_empty() {
        return Err(Error::Calibration("no predictions to calibrate".into()));
    }
    check_target(target, dists[0].len())?;
    let hi = max_smoothing(dists);
    tune_scalar(0.0, hi, false, SCAN_POINTS, target, BISECT_TOL, |a| {
        pred_smoothed_all(dists, a).map(|d| mean_entropy(&d))
    })
}

/// Entropy-matched tuning for the post-hoc methods. `inputs` are logits for
/// temperature scaling and distributions for prediction smoothing. Training
/// smoothing needs a retraining loop; use [`tune_scalar`] with a trainer.
pub fn tune_entropy_match(method: CalibrationMethod, inputs: &[Vec<f64>], target: f64) -> Result<TuneResult> {
    match method {
        CalibrationMethod::TempScaling => tune_temperature(inputs, target),
        CalibrationMethod::PredSmoothing => tune_pred_smoothing(inputs, target),
        CalibrationMethod::TrainSmoothing => Err(Error::Calibration(
            "train smoothing is tuned by retraining; call tune_scalar with a training closure".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::entropy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn temp_one_is_softmax() {
        let z = [0.3, -1.2, 2.0];
        assert_eq!(temp_scale(&z, 1.0).unwrap().probs(), softmax(&z).as_slice());
    }

    #[test]
    fn huge_temperature_is_near_uniform() {
        for p in temp_scale(&[3.0, 1.0, 0.0], 1e6).unwrap().probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn temp_two_on_ln4() {
        let d = temp_scale(&[4f64.ln(), 0.0], 2.0).unwrap();
        assert!((d.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.probs()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_temperature_rejected() {
        assert!(temp_scale(&[1.0], 0.0).is_err());
        assert!(temp_scale(&[1.0], -2.0).is_err());
    }

    #[test]
    fn smoothing_arithmetic() {
        assert_eq!(pred_smooth(&[0.2, 0.5, 0.3], 0.0).unwrap(), vec![0.2, 0.5, 0.3]);
        let s = pred_smooth(&[1.0, 0.0, 0.0], 0.3).unwrap();
        for (a, b) in s.iter().zip([0.8, 0.1, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        let t = train_smooth(&[0.0, 1.0, 0.0], 0.3).unwrap();
        for (a, b) in t.iter().zip([0.1, 0.8, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pred_smooth(&[0.4, 0.3, 0.3], 0.5).is_err());
        assert!(train_smooth(&[0.0, 1.0], 1.5).is_err());
    }

    #[test]
    fn pred_smooth_argmax_search() {
        // Every entry gains alpha/k and the top entry loses alpha, so the gap
        // to the runner-up shrinks by exactly alpha.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20_000 {
            let k = rng.random_range(2..6);
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let top = argmax(&p);
            let mut sorted = p.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let gap = sorted[0] - sorted[1];
            let alpha = rng.random::<f64>() * gap.min(p[top]);
            if alpha >= gap {
                continue;
            }
            let q = pred_smooth(&p, alpha).unwrap();
            assert_eq!(argmax(&q), top);
            assert!(q.iter().all(|&v| v >= 0.0));
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_flips_once_alpha_exceeds_gap() {
        // Gap 0.1; alpha 0.12 is below gap * k / (k - 1) = 0.15 yet flips the top label.
        let q = pred_smooth(&[0.5, 0.4, 0.1], 0.12).unwrap();
        assert_eq!(argmax(&q), 1);
        assert!((q[0] - 0.42).abs() < 1e-12 && (q[1] - 0.44).abs() < 1e-12);
    }

    #[test]
    fn tuner_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let logits: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let h1 = mean_entropy(&temp_scaled_all(&logits, 1.0).unwrap());
        let r = tune_temperature(&logits, h1).unwrap();
        assert!((r.scalar - 1.0).abs() < 1e-3, "{r:?}");
        assert!(!r.at_boundary);
    }

    #[test]
    fn tuner_uniform_target_hits_upper_boundary() {
        let logits = vec![vec![2.0, 0.0, -1.0], vec![0.0, 1.5, 0.2]];
        let r = tune_temperature(&logits, 3f64.ln()).unwrap();
        assert_eq!(r.scalar, TEMP_RANGE.1);
        assert!(r.at_boundary);
    }

    #[test]
    fn tuner_rejects_empty_and_bad_target() {
        assert!(tune_temperature(&[], 0.5).is_err());
        assert!(tune_temperature(&[vec![1.0, 0.0]], 5.0).is_err());
        assert!(tune_entropy_match(CalibrationMethod::TrainSmoothing, &[vec![1.0, 0.0]], 0.1).is_err());
    }

    #[test]
    fn pred_smoothing_tuner_hits_target() {
        let dists: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let a = 0.9 - 0.004 * i as f64;
                vec![a, 1.0 - a - 0.01, 0.01]
            })
            .collect();
        let h0 = mean_entropy(&dists);
        let target = h0 + 0.2;
        let r = tune_entropy_match(CalibrationMethod::PredSmoothing, &dists, target).unwrap();
        assert!((r.achieved_entropy - target).abs() < ENTROPY_TOL);
        let check = mean_entropy(&pred_smoothed_all(&dists, r.scalar).unwrap());
        assert_eq!(check, r.achieved_entropy);
        assert!(entropy(&dists[0]) < entropy(&pred_smooth(&dists[0], r.scalar).unwrap()));
    }
}
