//! Probability-simplex primitives.
//!
//! [`SimplexPoint`] is a validated categorical distribution, [`SimplexGrid`]
//! a lattice discretization of the simplex used to materialize credal sets,
//! and [`DirichletParams`] the concentration vector produced by second-order
//! models. The distance and divergence functions here are the building
//! blocks of every first-order nonconformity score.

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::scalar::{ln_gamma, Real};

/// Entries below this (in absolute value) are treated as rounding noise.
pub const NEGATIVE_MASS_TOLERANCE: f64 = 1e-12;
/// Maximal deviation of the entry sum from 1 that is silently renormalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;
/// Sums this close to one are accepted without renormalization.
pub const EXACT_SUM_TOLERANCE: f64 = 1e-12;
/// Floor applied to probabilities before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;
/// Default cap on the number of grid points.
pub const DEFAULT_RESOURCE_CAP: u64 = 10_000_000;

/// A categorical distribution over `K >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct SimplexPoint<T> {
    probs: Vec<T>,
}

impl<T: Real> SimplexPoint<T> {
    /// Validates and renormalizes `values`.
    ///
    /// Entries in `[-1e-12, 0)` are snapped to zero. A sum within `1e-12` of
    /// one is accepted as is, a sum within `1e-6` is divided out, anything
    /// further off is rejected.
    pub fn new(mut values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewClasses(values.len()));
        }
        let neg_tol = T::lit(-NEGATIVE_MASS_TOLERANCE);
        for (index, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { index });
            }
            if *v < neg_tol {
                return Err(Error::NegativeMass {
                    index,
                    value: v.as_f64(),
                });
            }
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(NORMALIZATION_TOLERANCE) {
            return Err(Error::NotNormalized { sum: sum.as_f64() });
        }
        // Rounding-level deviations are kept as is so that construction is
        // idempotent and serialized points load back bit for bit.
        let exact_tol = T::lit(EXACT_SUM_TOLERANCE).max(T::epsilon() * T::lit(16.0));
        if (sum - T::one()).abs() > exact_tol {
            for v in &mut values {
                *v /= sum;
            }
        }
        Ok(Self { probs: values })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        let p = T::one() / T::from_usize_lossy(k);
        Ok(Self { probs: vec![p; k] })
    }

    /// One-hot distribution concentrated on `class`.
    pub fn vertex(k: usize, class: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        if class >= k {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for K = {k}"
            )));
        }
        let mut probs = vec![T::zero(); k];
        probs[class] = T::one();
        Ok(Self { probs })
    }

    /// Relative frequencies of nonnegative counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::NotNormalized { sum: 0.0 });
        }
        let t = T::from_u64(total).expect("count representable");
        Self::new(
            counts
                .iter()
                .map(|&c| T::from_u64(c).expect("count representable") / t)
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<T> {
        self.probs
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        -self
            .probs
            .iter()
            .filter(|p| **p > T::zero())
            .map(|&p| p * p.ln())
            .sum::<T>()
    }
}

impl<T: Real> TryFrom<Vec<T>> for SimplexPoint<T> {
    type Error = Error;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::new(values)
    }
}

impl<T> From<SimplexPoint<T>> for Vec<T> {
    fn from(p: SimplexPoint<T>) -> Self {
        p.probs
    }
}

/// Number of lattice points `binomial(n + k - 1, k - 1)`, saturating.
pub fn grid_size(k: usize, n: usize) -> u128 {
    let top = (n + k - 1) as u128;
    let r = (k - 1).min(n) as u128;
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(top - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Serializable description of a grid; the grid itself is rebuilt on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub k: usize,
    pub n: usize,
}

/// The lattice `{ i / n : i a nonnegative integer composition of n into k parts }`.
///
/// Points are ordered lexicographically (ascending) by their integer
/// compositions, so `(0, .., 0, n)` comes first and `(n, 0, .., 0)` last.
#[derive(Debug, Clone)]
pub struct SimplexGrid<T> {
    k: usize,
    n: usize,
    points: Vec<SimplexPoint<T>>,
}

impl<T: Real> SimplexGrid<T> {
    pub fn build(k: usize, n: usize) -> Result<Self> {
        Self::build_with_cap(k, n, DEFAULT_RESOURCE_CAP)
    }

    pub fn build_with_cap(k: usize, n: usize, cap: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        if n < 1 {
            return Err(Error::InvalidArgument("grid subdivisions must be >= 1".into()));
        }
        let requested = grid_size(k, n);
        if requested > cap as u128 {
            return Err(Error::ResourceLimit { requested, cap });
        }
        let scale = T::from_usize_lossy(n);
        let mut points = Vec::with_capacity(requested as usize);
        for_each_composition(k, n, |c| {
            let probs = c.iter().map(|&i| T::from_usize_lossy(i) / scale).collect();
            points.push(SimplexPoint { probs });
        });
        debug_assert_eq!(points.len() as u128, requested);
        Ok(Self { k, n, points })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor { k: self.k, n: self.n }
    }

    pub fn points(&self) -> &[SimplexPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integer composition of the `index`-th point.
    pub fn composition(&self, index: usize) -> Vec<usize> {
        let scale = T::from_usize_lossy(self.n);
        self.points[index]
            .probs
            .iter()
            .map(|&p| (p * scale).round().to_usize().unwrap_or(0))
            .collect()
    }
}

/// Calls `f` with every composition of `n` into `k` nonnegative parts, in
/// ascending lexicographic order.
pub fn for_each_composition(k: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut c = vec![0usize; k];
    c[k - 1] = n;
    loop {
        f(&c);
        // Successor: find the rightmost position before the last that can be
        // incremented (some mass remains to its right).
        let mut pos = None;
        for i in (0..k - 1).rev() {
            if c[i + 1..].iter().any(|&v| v > 0) {
                pos = Some(i);
                break;
            }
        }
        let Some(i) = pos else { return };
        let rest: usize = c[i + 1..].iter().sum();
        c[i] += 1;
        for v in &mut c[i + 1..] {
            *v = 0;
        }
        c[k - 1] = rest - 1;
    }
}

/// Total variation distance `0.5 * sum |p_k - q_k|`.
pub fn tv_distance<T: Real>(p: &SimplexPoint<T>, q: &SimplexPoint<T>) -> Result<T> {
    check_dims(p.k(), q.k())?;
    let s: T = p.probs.iter().zip(&q.probs).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(T::lit(0.5) * s)
}

/// Kullback-Leibler divergence `KL(p || q)` with `0 log 0 = 0` and `q`
/// clamped at `1e-12`.
pub fn kl_divergence<T: Real>(p: &SimplexPoint<T>, q: &SimplexPoint<T>) -> Result<T> {
    check_dims(p.k(), q.k())?;
    let floor = T::lit(LOG_CLAMP);
    let s: T = p
        .probs
        .iter()
        .zip(&q.probs)
        .filter(|(a, _)| **a > T::zero())
        .map(|(&a, &b)| a * (a / b.max(floor)).ln())
        .sum();
    // Exact zero for p == q; otherwise guard tiny negative rounding.
    Ok(s.max(T::zero()))
}

/// 1-Wasserstein distance with classes placed at the integers `1..=K` and
/// ground metric `|i - j|`, computed from cumulative distribution functions.
pub fn wasserstein1<T: Real>(p: &SimplexPoint<T>, q: &SimplexPoint<T>) -> Result<T> {
    check_dims(p.k(), q.k())?;
    let mut cdf_p = T::zero();
    let mut cdf_q = T::zero();
    let mut total = T::zero();
    for k in 0..p.k() - 1 {
        cdf_p += p.probs[k];
        cdf_q += q.probs[k];
        total += (cdf_p - cdf_q).abs();
    }
    Ok(total)
}

/// `1 - <p, q>`.
pub fn inner_score<T: Real>(p: &SimplexPoint<T>, q: &SimplexPoint<T>) -> Result<T> {
    check_dims(p.k(), q.k())?;
    let dot: T = p.probs.iter().zip(&q.probs).map(|(&a, &b)| a * b).sum();
    Ok(T::one() - dot)
}

/// Dirichlet concentration parameters, every entry strictly greater than one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct DirichletParams<T> {
    theta: Vec<T>,
}

impl<T: Real> DirichletParams<T> {
    pub fn new(theta: Vec<T>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::TooFewClasses(theta.len()));
        }
        for (index, &t) in theta.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFiniteValue { index });
            }
            if t <= T::one() {
                return Err(Error::InvalidConcentration {
                    index,
                    value: t.as_f64(),
                });
            }
        }
        Ok(Self { theta })
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    /// `ln B(theta) = sum ln Γ(theta_k) - ln Γ(sum theta_k)`.
    pub fn ln_beta(&self) -> T {
        let total: T = self.theta.iter().copied().sum();
        self.theta.iter().map(|&t| ln_gamma(t)).sum::<T>() - ln_gamma(total)
    }
}

impl<T: Real> TryFrom<Vec<T>> for DirichletParams<T> {
    type Error = Error;

    fn try_from(values: Vec<T>) -> Result<Self> {
        Self::new(values)
    }
}

impl<T> From<DirichletParams<T>> for Vec<T> {
    fn from(p: DirichletParams<T>) -> Self {
        p.theta
    }
}

fn log_kernel<T: Real>(lambda: &[T], theta: &[T]) -> T {
    let floor = T::lit(LOG_CLAMP);
    lambda
        .iter()
        .zip(theta)
        .map(|(&l, &t)| (t - T::one()) * l.max(floor).ln())
        .sum()
}

/// Log density of `Dir(theta)` at `lambda`; entries of `lambda` are clamped
/// at `1e-12` before taking logs.
pub fn dirichlet_log_density<T: Real>(
    lambda: &SimplexPoint<T>,
    theta: &DirichletParams<T>,
) -> Result<T> {
    check_dims(theta.k(), lambda.k())?;
    Ok(log_kernel(&lambda.probs, &theta.theta) - theta.ln_beta())
}

/// Closed-form mode `(theta_k - 1) / (sum theta - K)`.
pub fn dirichlet_mode<T: Real>(theta: &DirichletParams<T>) -> SimplexPoint<T> {
    let k = T::from_usize_lossy(theta.k());
    let denom = theta.theta.iter().copied().sum::<T>() - k;
    let probs = theta.theta.iter().map(|&t| (t - T::one()) / denom).collect();
    SimplexPoint { probs }
}

/// One minus the relative likelihood `Dir(lambda | theta) / max Dir(. | theta)`.
///
/// The normalizing constant cancels, so only the density kernels at `lambda`
/// and at the mode are evaluated. The result lies in `[0, 1]`.
pub fn dirichlet_relative_nonconformity<T: Real>(
    lambda: &SimplexPoint<T>,
    theta: &DirichletParams<T>,
) -> Result<T> {
    check_dims(theta.k(), lambda.k())?;
    let mode = dirichlet_mode(theta);
    let log_ratio = log_kernel(&lambda.probs, &theta.theta) - log_kernel(&mode.probs, &theta.theta);
    let score = -log_ratio.exp_m1();
    Ok(score.max(T::zero()).min(T::one()))
}
