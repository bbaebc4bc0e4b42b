//! Linear-softmax synthetic data.
//!
//! Features are i.i.d. standard normal in `R^d`, the coefficient matrix
//! `beta (d x k)` has i.i.d. standard normal entries, and the ground-truth
//! label of `x` is `lambda_k = exp(x . beta_k) / sum_j exp(x . beta_j)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::LabeledExample;
use crate::random::{derive_seed, rng_from_seed};
use crate::scalar::{softmax, Real};
use crate::simplex::SimplexPoint;

fn default_d() -> usize {
    10
}
fn default_n() -> usize {
    1500
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub k: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            d: default_d(),
            n: default_n(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.k) {
            return Err(Error::InvalidArgument(format!("k must lie in 2..=16, got {}", self.k)));
        }
        if self.d == 0 || self.n == 0 {
            return Err(Error::InvalidArgument("d and n must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData<T> {
    /// `d` rows of `k` coefficients.
    pub beta: Vec<Vec<T>>,
    pub data: Vec<LabeledExample<T>>,
}

/// Ground-truth label distribution of `x` under `beta`.
pub fn label_distribution<T: Real>(x: &[T], beta: &[Vec<T>]) -> SimplexPoint<T> {
    let k = beta.first().map_or(0, Vec::len);
    let logits: Vec<T> = (0..k)
        .map(|j| x.iter().zip(beta).map(|(&xi, row)| xi * row[j]).sum())
        .collect();
    SimplexPoint::new(softmax(&logits)).expect("softmax is a distribution")
}

pub fn generate<T: Real>(spec: &GeneratorSpec) -> Result<SyntheticData<T>> {
    spec.validate()?;
    let mut rng = rng_from_seed(derive_seed(spec.seed, 0));
    let beta: Vec<Vec<T>> = (0..spec.d)
        .map(|_| {
            (0..spec.k)
                .map(|_| T::lit(StandardNormal.sample(&mut rng)))
                .collect()
        })
        .collect();
    generate_with_beta(spec, beta)
}

/// Same as [`generate`] with a caller-supplied coefficient matrix; the
/// features are drawn from the same seeded stream.
pub fn generate_with_beta<T: Real>(spec: &GeneratorSpec, beta: Vec<Vec<T>>) -> Result<SyntheticData<T>> {
    spec.validate()?;
    if beta.len() != spec.d || beta.iter().any(|r| r.len() != spec.k) {
        return Err(Error::DimensionMismatch {
            expected: spec.d * spec.k,
            actual: beta.iter().map(Vec::len).sum(),
        });
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, 1));
    let data = (0..spec.n)
        .map(|_| {
            let x: Vec<T> = (0..spec.d)
                .map(|_| T::lit(StandardNormal.sample(&mut rng)))
                .collect();
            let label = label_distribution(&x, &beta);
            LabeledExample::new(x, label)
        })
        .collect();
    Ok(SyntheticData { beta, data })
}
