//! Noisy labels: multinomial corruption of ground-truth distributions and the
//! bounded-noise threshold adjustment.
//!
//! Under the bounded-noise assumption
//!
//! ```text
//! P(|f(x, lambda) - f(x, noisy_lambda)| < epsilon) >= 1 - delta
//! ```
//!
//! a predictor calibrated on noisy labels at the adjusted rate
//! `(alpha - delta) / (1 - delta)` and then widened by `epsilon` covers the
//! clean label with probability at least `1 - alpha`.

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{score, CalibratedPredictor, ScoreKind, ScoreSet};
use crate::error::{Error, Result};
use crate::predictors::{LabeledExample, Model};
use crate::random::{derive_seed, rng_from_seed, Rng};
use crate::scalar::Real;
use crate::simplex::SimplexPoint;

/// Relative frequencies of `m` i.i.d. draws from `lambda`.
pub fn corrupt_one<T: Real>(lambda: &SimplexPoint<T>, m: u64, rng: &mut Rng) -> SimplexPoint<T> {
    let probs = lambda.probs();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = m;
    let mut rest_mass = 1.0_f64;
    // Conditional binomial decomposition of the multinomial.
    for (k, &p) in probs.iter().enumerate().take(probs.len() - 1) {
        if remaining == 0 {
            break;
        }
        let p = p.as_f64();
        let cond = if rest_mass > 0.0 { (p / rest_mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = Binomial::new(remaining, cond)
            .expect("probability clamped to [0, 1]")
            .sample(rng);
        counts[k] = c;
        remaining -= c;
        rest_mass -= p;
    }
    *counts.last_mut().expect("K >= 2") += remaining;
    SimplexPoint::from_counts(&counts).expect("m >= 1 draws")
}

/// Replaces every distribution by the empirical frequencies of `m` samples.
///
/// Example `i` uses the sub-stream `derive_seed(seed, i)`, so the output does
/// not depend on evaluation order.
pub fn corrupt<T: Real>(labels: &[SimplexPoint<T>], m: u64, seed: u64) -> Result<Vec<SimplexPoint<T>>> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    Ok(labels
        .par_iter()
        .enumerate()
        .map(|(i, l)| corrupt_one(l, m, &mut rng_from_seed(derive_seed(seed, i as u64))))
        .collect())
}

/// Corrupts the labels of a dataset, keeping the originals as clean labels.
pub fn corrupt_dataset<T: Real>(
    data: &[LabeledExample<T>],
    m: u64,
    seed: u64,
) -> Result<Vec<LabeledExample<T>>> {
    let clean: Vec<SimplexPoint<T>> = data.iter().map(|e| e.clean_or_observed().clone()).collect();
    let noisy = corrupt(&clean, m, seed)?;
    Ok(data
        .iter()
        .zip(clean.into_iter().zip(noisy))
        .map(|(e, (c, n))| LabeledExample {
            features: e.features.clone(),
            label_dist: n,
            clean_label_dist: Some(c),
        })
        .collect())
}

/// Bounded-noise parameters together with the target miscoverage rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    pub epsilon: T,
    pub delta: T,
    pub alpha: T,
}

impl<T: Real> NoiseSpec<T> {
    pub fn new(epsilon: T, delta: T, alpha: T) -> Result<Self> {
        let spec = Self {
            epsilon,
            delta,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument("epsilon must be finite and >= 0".into()));
        }
        if !(self.delta >= T::zero() && self.delta < T::one()) {
            return Err(Error::InvalidArgument("delta must lie in [0, 1)".into()));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
        }
        if self.alpha <= self.delta {
            return Err(Error::InfeasibleNoise {
                alpha: self.alpha.as_f64(),
                delta: self.delta.as_f64(),
            });
        }
        Ok(())
    }

    /// `(alpha - delta) / (1 - delta)`.
    pub fn adjusted_alpha(&self) -> Result<T> {
        self.validate()?;
        Ok((self.alpha - self.delta) / (T::one() - self.delta))
    }

    pub fn widen(&self, q: T) -> T {
        q + self.epsilon
    }
}

/// Free-function form of [`NoiseSpec::adjusted_alpha`].
pub fn adjusted_alpha<T: Real>(spec: &NoiseSpec<T>) -> Result<T> {
    spec.adjusted_alpha()
}

/// Widens a predictor calibrated on noisy data at the adjusted rate by
/// `epsilon`; the result targets coverage `1 - spec.alpha` of clean labels.
pub fn adjusted_predictor<T: Real>(
    pred: &CalibratedPredictor<T>,
    spec: &NoiseSpec<T>,
) -> Result<CalibratedPredictor<T>> {
    let expected = spec.adjusted_alpha()?;
    if (pred.alpha - expected).abs() > T::lit(1e-12) {
        return Err(Error::MiscalibratedRate {
            expected: expected.as_f64(),
            actual: pred.alpha.as_f64(),
        });
    }
    let mut out = pred.clone();
    out.threshold_q = spec.widen(pred.threshold_q);
    Ok(out)
}

/// Fraction of paired examples whose clean and noisy scores differ by less
/// than `epsilon`: an estimate of `1 - delta`.
///
/// `label_dist` is read as the noisy label and `clean_label_dist` as the
/// clean one; every example must carry both.
pub fn check_bounded_noise<T: Real>(
    model: &Model<T>,
    kind: ScoreKind,
    paired: &[LabeledExample<T>],
    epsilon: T,
) -> Result<T> {
    if paired.is_empty() {
        return Err(Error::InvalidArgument("no paired examples".into()));
    }
    let close = paired
        .par_iter()
        .map(|ex| {
            let clean = ex.clean_label_dist.as_ref().ok_or_else(|| {
                Error::InvalidArgument("paired example lacks clean_label_dist".into())
            })?;
            let a = score(model, kind, &ex.features, clean)?;
            let b = score(model, kind, &ex.features, &ex.label_dist)?;
            Ok(usize::from((a - b).abs() < epsilon))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(T::from_usize_lossy(close) / T::from_usize_lossy(paired.len()))
}

/// Outcome of [`simulate_bounded_noise`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseSimulation {
    pub trials: usize,
    /// Clean-score coverage of `q(noisy, adjusted alpha) + epsilon`.
    pub adjusted_coverage: f64,
    /// Clean-score coverage of `q(noisy, alpha)` without any adjustment.
    pub naive_coverage: f64,
    /// Observed frequency of `|clean - noisy| < epsilon`.
    pub closeness_rate: f64,
}

/// Draws a (clean, noisy) score pair where the bounded-noise condition holds
/// with probability exactly `1 - delta`. Clean scores are uniform on [0, 1];
/// noisy scores understate them (the adverse direction for coverage), by
/// less than `epsilon` normally and by at least `epsilon` on violations.
fn noisy_score_pair(epsilon: f64, delta: f64, rng: &mut Rng) -> (f64, f64) {
    let clean: f64 = rng.gen();
    let noisy = if rng.gen::<f64>() < delta {
        clean - epsilon - rng.gen::<f64>()
    } else {
        clean - epsilon * rng.gen::<f64>()
    };
    (clean, noisy)
}

/// Monte Carlo check of the bounded-noise guarantee on a synthetic score
/// process: each trial calibrates on `calib_size` noisy scores and tests one
/// fresh clean score.
pub fn simulate_bounded_noise(
    spec: &NoiseSpec<f64>,
    calib_size: usize,
    trials: usize,
    seed: u64,
) -> Result<NoiseSimulation> {
    let adjusted = spec.adjusted_alpha()?;
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, t as u64));
            let mut close = 0usize;
            let noisy: Vec<f64> = (0..calib_size)
                .map(|_| {
                    let (c, n) = noisy_score_pair(spec.epsilon, spec.delta, &mut rng);
                    close += usize::from((c - n).abs() < spec.epsilon);
                    n
                })
                .collect();
            let set = ScoreSet::new(noisy)?;
            let q_adj = spec.widen(set.threshold(adjusted)?.q);
            let q_naive = set.threshold(spec.alpha)?.q;
            let (clean, _) = noisy_score_pair(spec.epsilon, spec.delta, &mut rng);
            Ok((clean < q_adj, clean < q_naive, close))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = trials as f64;
    Ok(NoiseSimulation {
        trials,
        adjusted_coverage: results.iter().filter(|r| r.0).count() as f64 / n,
        naive_coverage: results.iter().filter(|r| r.1).count() as f64 / n,
        closeness_rate: results.iter().map(|r| r.2).sum::<usize>() as f64 / (n * calib_size as f64),
    })
}
