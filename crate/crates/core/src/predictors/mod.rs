//! First-order (distribution-valued) and second-order (Dirichlet-valued)
//! predictors trained on distribution-labeled data.
//!
//! Both model families share the same network body ([`Network`]); they only
//! differ in the output map. First-order models apply a softmax and are fit
//! by minimizing the cross-entropy against the label distribution.
//! Second-order models map raw scores `r` to `theta = softplus(r) + 1`, so
//! every predicted Dirichlet has an interior, unique mode, and are fit by
//! minimizing the Dirichlet negative log-likelihood of the label.

pub mod gradcheck;
mod network;

pub use gradcheck::{gradient_check, gradient_check_model, GradCheckReport};
pub use network::Network;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::random::{derive_seed, rng_from_seed};
use crate::scalar::{digamma, sigmoid, softmax, softplus, Real};
use crate::simplex::{DirichletParams, SimplexPoint, LOG_CLAMP};

/// A feature vector paired with its label distribution.
///
/// `clean_label_dist` carries the ground-truth distribution when
/// `label_dist` is a noisy approximation of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct LabeledExample<T> {
    pub features: Vec<T>,
    pub label_dist: SimplexPoint<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_label_dist: Option<SimplexPoint<T>>,
}

impl<T: Real> LabeledExample<T> {
    pub fn new(features: Vec<T>, label_dist: SimplexPoint<T>) -> Self {
        Self {
            features,
            label_dist,
            clean_label_dist: None,
        }
    }

    /// Ground-truth label when known, otherwise the observed label.
    pub fn clean_or_observed(&self) -> &SimplexPoint<T> {
        self.clean_label_dist.as_ref().unwrap_or(&self.label_dist)
    }
}

/// Checks that a dataset is nonempty with constant feature and class
/// dimensions; returns `(D, K)`.
pub fn dataset_dims<T: Real>(data: &[LabeledExample<T>]) -> Result<(usize, usize)> {
    let first = data
        .first()
        .ok_or_else(|| Error::InvalidArgument("dataset is empty".into()))?;
    let (d, k) = (first.features.len(), first.label_dist.k());
    for ex in data {
        check_dims(d, ex.features.len())?;
        check_dims(k, ex.label_dist.k())?;
        if let Some(c) = &ex.clean_label_dist {
            check_dims(k, c.k())?;
        }
        if let Some(i) = ex.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index: i });
        }
    }
    Ok((d, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelOrder {
    First,
    Second,
}

impl std::fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelOrder::First => "first",
            ModelOrder::Second => "second",
        })
    }
}

impl std::str::FromStr for ModelOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "first" | "1" => Ok(ModelOrder::First),
            "second" | "2" => Ok(ModelOrder::Second),
            other => Err(Error::InvalidArgument(format!("unknown model order '{other}'"))),
        }
    }
}

fn default_lr<T: Real>() -> T {
    T::lit(1e-3)
}
fn default_epochs() -> usize {
    500
}
fn default_batch() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrainConfig<T> {
    #[serde(default = "default_lr")]
    pub learning_rate: T,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub hidden_width: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub l2: T,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            hidden_width: 0,
            seed: 0,
            l2: T::zero(),
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.l2 >= T::zero()) {
            return Err(Error::InvalidArgument("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Softmax classifier `g: X -> simplex`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderModel<T> {
    pub(crate) net: Network<T>,
}

impl<T: Real> FirstOrderModel<T> {
    pub fn from_network(net: Network<T>) -> Self {
        Self { net }
    }

    pub fn init(input_dim: usize, hidden_width: usize, classes: usize, seed: u64) -> Self {
        Self::from_network(Network::init(input_dim, hidden_width, classes, seed))
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn predict(&self, x: &[T]) -> Result<SimplexPoint<T>> {
        check_dims(self.net.input_dim, x.len())?;
        SimplexPoint::new(softmax(&self.net.raw_scores(x)))
    }

    fn example_loss(&self, ex: &LabeledExample<T>, grad: Option<&mut [T]>) -> T {
        let acts = self.net.forward(&ex.features);
        let p = softmax(&acts.output);
        let floor = T::lit(LOG_CLAMP);
        let lambda = ex.label_dist.probs();
        let loss = -lambda
            .iter()
            .zip(&p)
            .map(|(&l, &q)| l * q.max(floor).ln())
            .sum::<T>();
        if let Some(grad) = grad {
            // dL/dp_k, zero where the clamp is active.
            let u: Vec<T> = lambda
                .iter()
                .zip(&p)
                .map(|(&l, &q)| if q > floor { -l / q } else { T::zero() })
                .collect();
            let up: T = u.iter().zip(&p).map(|(&a, &b)| a * b).sum();
            let d_out: Vec<T> = p.iter().zip(&u).map(|(&pj, &uj)| pj * (uj - up)).collect();
            self.net.backward(&ex.features, &acts, &d_out, grad);
        }
        loss
    }
}

/// Dirichlet regressor `G: X -> Dir(theta)`, `theta = softplus(raw) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderModel<T> {
    pub(crate) net: Network<T>,
}

impl<T: Real> SecondOrderModel<T> {
    pub fn from_network(net: Network<T>) -> Self {
        Self { net }
    }

    pub fn init(input_dim: usize, hidden_width: usize, classes: usize, seed: u64) -> Self {
        Self::from_network(Network::init(input_dim, hidden_width, classes, seed))
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    /// The softplus term is floored at machine epsilon so that `theta > 1`
    /// survives underflow for very negative scores.
    fn theta_of(raw: &[T]) -> Vec<T> {
        raw.iter()
            .map(|&r| softplus(r).max(T::epsilon()) + T::one())
            .collect()
    }

    pub fn predict(&self, x: &[T]) -> Result<DirichletParams<T>> {
        check_dims(self.net.input_dim, x.len())?;
        DirichletParams::new(Self::theta_of(&self.net.raw_scores(x)))
    }

    fn example_loss(&self, ex: &LabeledExample<T>, grad: Option<&mut [T]>) -> T {
        let acts = self.net.forward(&ex.features);
        let theta = Self::theta_of(&acts.output);
        let floor = T::lit(LOG_CLAMP);
        let log_lambda: Vec<T> = ex.label_dist.probs().iter().map(|&l| l.max(floor).ln()).collect();
        let total: T = theta.iter().copied().sum();
        let ln_b = theta.iter().map(|&t| crate::scalar::ln_gamma(t)).sum::<T>()
            - crate::scalar::ln_gamma(total);
        let loss = ln_b
            - theta
                .iter()
                .zip(&log_lambda)
                .map(|(&t, &ll)| (t - T::one()) * ll)
                .sum::<T>();
        if let Some(grad) = grad {
            let psi_total = digamma(total);
            let d_out: Vec<T> = theta
                .iter()
                .zip(&log_lambda)
                .zip(&acts.output)
                .map(|((&t, &ll), &r)| (digamma(t) - psi_total - ll) * sigmoid(r))
                .collect();
            self.net.backward(&ex.features, &acts, &d_out, grad);
        }
        loss
    }
}

/// Output of a trained model for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub enum Prediction<T> {
    Distribution(SimplexPoint<T>),
    Dirichlet(DirichletParams<T>),
}

impl<T: Real> Prediction<T> {
    pub fn k(&self) -> usize {
        match self {
            Prediction::Distribution(p) => p.k(),
            Prediction::Dirichlet(t) => t.k(),
        }
    }
}

/// Either model family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model<T> {
    First(FirstOrderModel<T>),
    Second(SecondOrderModel<T>),
}

impl<T: Real> Model<T> {
    pub fn init(order: ModelOrder, input_dim: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        match order {
            ModelOrder::First => Model::First(FirstOrderModel::init(input_dim, hidden, classes, seed)),
            ModelOrder::Second => Model::Second(SecondOrderModel::init(input_dim, hidden, classes, seed)),
        }
    }

    pub fn order(&self) -> ModelOrder {
        match self {
            Model::First(_) => ModelOrder::First,
            Model::Second(_) => ModelOrder::Second,
        }
    }

    pub fn network(&self) -> &Network<T> {
        match self {
            Model::First(m) => &m.net,
            Model::Second(m) => &m.net,
        }
    }

    pub(crate) fn network_mut(&mut self) -> &mut Network<T> {
        match self {
            Model::First(m) => &mut m.net,
            Model::Second(m) => &mut m.net,
        }
    }

    pub fn classes(&self) -> usize {
        self.network().classes
    }

    pub fn input_dim(&self) -> usize {
        self.network().input_dim
    }

    pub fn predict(&self, x: &[T]) -> Result<Prediction<T>> {
        match self {
            Model::First(m) => m.predict(x).map(Prediction::Distribution),
            Model::Second(m) => m.predict(x).map(Prediction::Dirichlet),
        }
    }

    fn check_example(&self, ex: &LabeledExample<T>) -> Result<()> {
        check_dims(self.input_dim(), ex.features.len())?;
        check_dims(self.classes(), ex.label_dist.k())
    }

    /// Per-example training loss, optionally accumulating its gradient.
    pub(crate) fn example_loss(&self, ex: &LabeledExample<T>, grad: Option<&mut [T]>) -> T {
        match self {
            Model::First(m) => m.example_loss(ex, grad),
            Model::Second(m) => m.example_loss(ex, grad),
        }
    }

    /// Mean training loss over `batch` (cross-entropy or Dirichlet NLL).
    pub fn loss(&self, batch: &[LabeledExample<T>]) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut total = T::zero();
        for ex in batch {
            self.check_example(ex)?;
            total += self.example_loss(ex, None);
        }
        Ok(total / T::from_usize_lossy(batch.len()))
    }
}

/// Mean cross-entropy `-sum_k lambda_k log g(x)_k` over a batch.
pub fn cross_entropy_loss<T: Real>(model: &FirstOrderModel<T>, batch: &[LabeledExample<T>]) -> Result<T> {
    Model::First(model.clone()).loss(batch)
}

/// Mean Dirichlet negative log-likelihood `ln B(theta) - sum (theta_k - 1) ln lambda_k`.
pub fn dirichlet_nll_loss<T: Real>(
    model: &SecondOrderModel<T>,
    batch: &[LabeledExample<T>],
) -> Result<T> {
    Model::Second(model.clone()).loss(batch)
}

/// Mean full-data loss before training (index 0) and after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrainingLog<T> {
    pub epoch_losses: Vec<T>,
}

impl<T: Real> TrainingLog<T> {
    pub fn initial(&self) -> T {
        self.epoch_losses[0]
    }

    pub fn last(&self) -> T {
        *self.epoch_losses.last().expect("log has the initial entry")
    }
}

#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub model: Model<T>,
    pub log: TrainingLog<T>,
}

/// Fits a model of the given order by mini-batch gradient descent.
///
/// Examples are reshuffled every epoch from a stream seeded by
/// `config.seed`; the result is deterministic given data order and config.
pub fn train<T: Real>(
    order: ModelOrder,
    data: &[LabeledExample<T>],
    config: &TrainConfig<T>,
) -> Result<Trained<T>> {
    config.validate()?;
    let (d, k) = dataset_dims(data)?;
    let mut model = Model::init(order, d, config.hidden_width, k, config.seed);
    let mut rng = rng_from_seed(derive_seed(config.seed, 1));
    let mut order_idx: Vec<usize> = (0..data.len()).collect();
    let n_params = model.network().params.len();
    let mut grad = vec![T::zero(); n_params];

    let mut losses = Vec::with_capacity(config.epochs + 1);
    let initial = model.loss(data)?;
    if !initial.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    losses.push(initial);

    for epoch in 1..=config.epochs {
        order_idx.shuffle(&mut rng);
        for batch in order_idx.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                model.example_loss(&data[i], Some(&mut grad));
            }
            let scale = config.learning_rate / T::from_usize_lossy(batch.len());
            let net = model.network_mut();
            let decay = config.l2 * config.learning_rate;
            for (i, g) in grad.iter().enumerate() {
                let mut step = scale * *g;
                if decay > T::zero() && !net.is_bias(i) {
                    step += decay * net.params[i];
                }
                net.params[i] -= step;
            }
        }
        let loss = model.loss(data)?;
        if !loss.is_finite() || net_has_nan(model.network()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(loss);
    }
    Ok(Trained {
        model,
        log: TrainingLog {
            epoch_losses: losses,
        },
    })
}

fn net_has_nan<T: Real>(net: &Network<T>) -> bool {
    net.params.iter().any(|p| !p.is_finite())
}

// ---------------------------------------------------------------------------
// Versioned JSON document.

pub const MODEL_FORMAT: &str = "credal-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub classes: usize,
    pub hidden_activation: String,
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Parameters<T> {
    pub hidden_weights: Vec<T>,
    pub hidden_bias: Vec<T>,
    pub output_weights: Vec<T>,
    pub output_bias: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ModelDocument<T> {
    pub format: String,
    pub version: u32,
    pub order: ModelOrder,
    pub architecture: Architecture,
    pub parameters: Parameters<T>,
}

fn output_map_name(order: ModelOrder) -> &'static str {
    match order {
        ModelOrder::First => "softmax",
        ModelOrder::Second => "softplus_plus_one",
    }
}

impl<T: Real> From<&Model<T>> for ModelDocument<T> {
    fn from(model: &Model<T>) -> Self {
        let net = model.network();
        let (hw, hb, ow, ob) = net.parts();
        ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            order: model.order(),
            architecture: Architecture {
                input_dim: net.input_dim,
                hidden_width: net.hidden_width,
                classes: net.classes,
                hidden_activation: "relu".into(),
                output: output_map_name(model.order()).into(),
            },
            parameters: Parameters {
                hidden_weights: hw.to_vec(),
                hidden_bias: hb.to_vec(),
                output_weights: ow.to_vec(),
                output_bias: ob.to_vec(),
            },
        }
    }
}

impl<T: Real> TryFrom<ModelDocument<T>> for Model<T> {
    type Error = Error;

    fn try_from(doc: ModelDocument<T>) -> Result<Self> {
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let a = &doc.architecture;
        if a.output != output_map_name(doc.order) {
            return Err(Error::InvalidArgument(format!(
                "output map '{}' does not match {} order",
                a.output, doc.order
            )));
        }
        if a.classes < 2 {
            return Err(Error::TooFewClasses(a.classes));
        }
        let (h, d, k) = (a.hidden_width, a.input_dim, a.classes);
        let p = &doc.parameters;
        let expect_out_cols = if h == 0 { d } else { h };
        check_dims(h * d, p.hidden_weights.len())?;
        check_dims(h, p.hidden_bias.len())?;
        check_dims(k * expect_out_cols, p.output_weights.len())?;
        check_dims(k, p.output_bias.len())?;
        let mut params = Vec::with_capacity(network::param_count(d, h, k));
        params.extend_from_slice(&p.hidden_weights);
        params.extend_from_slice(&p.hidden_bias);
        params.extend_from_slice(&p.output_weights);
        params.extend_from_slice(&p.output_bias);
        if let Some(index) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        let net = Network {
            input_dim: d,
            hidden_width: h,
            classes: k,
            params,
        };
        Ok(match doc.order {
            ModelOrder::First => Model::First(FirstOrderModel { net }),
            ModelOrder::Second => Model::Second(SecondOrderModel { net }),
        })
    }
}

impl<T: Real> Serialize for Model<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDocument::from(self).serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for Model<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDocument::<T>::deserialize(d)?;
        Model::try_from(doc).map_err(serde::de::Error::custom)
    }
}
