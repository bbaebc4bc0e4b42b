//! Conformal credal set prediction.
//!
//! A credal set predictor maps an input to a *set* of candidate class
//! distributions. This crate trains first-order (softmax) and second-order
//! (Dirichlet) models on distribution-labeled data, calibrates a
//! nonconformity threshold on held-out data with split conformal
//! prediction, and materializes the resulting credal sets on a lattice over
//! the probability simplex. Labels that are only noisy approximations of the
//! true distributions (relative frequencies of a few annotations, say) are
//! handled through a bounded-noise threshold adjustment.
//!
//! ```
//! use credal_core::{calibrate, generate, train, GeneratorSpec, ModelOrder, ScoreKind, TrainConfig};
//!
//! let data = generate::<f64>(&GeneratorSpec { k: 3, d: 4, n: 300, seed: 7 }).unwrap().data;
//! let (fit, rest) = data.split_at(100);
//! let (calib, test) = rest.split_at(100);
//! let config = TrainConfig { learning_rate: 0.2, epochs: 50, ..Default::default() };
//! let model = train(ModelOrder::First, fit, &config).unwrap().model;
//! let predictor = calibrate(model, ScoreKind::Tv, calib, 0.1).unwrap();
//! let coverage = predictor.empirical_coverage(test).unwrap();
//! assert!(coverage > 0.7);
//! ```
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below name the double-precision instantiations used by the
//! command line and the experiment harness.

pub mod conformal;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod noise;
pub mod plot;
pub mod predictors;
pub mod random;
pub mod scalar;
pub mod serde_ext;
pub mod simplex;
pub mod synthetic;

pub use conformal::{
    calibrate, calibration_scores, conformal_index, score, score_prediction, CalibratedPredictor,
    CredalRegion, ScoreKind, ScoreSet, Threshold,
};
pub use error::{Error, ErrorCategory, Result};
pub use evaluation::{run, summarize, CoverageTarget, DatasetSource, ExperimentSpec, Report};
pub use noise::{adjusted_alpha, adjusted_predictor, check_bounded_noise, corrupt, NoiseSpec};
pub use plot::{render_ternary, TernaryPlotSpec};
pub use predictors::{
    cross_entropy_loss, dirichlet_nll_loss, gradient_check, train, FirstOrderModel, LabeledExample,
    Model, ModelOrder, Prediction, SecondOrderModel, TrainConfig,
};
pub use scalar::Real;
pub use simplex::{
    dirichlet_log_density, dirichlet_mode, dirichlet_relative_nonconformity, inner_score,
    kl_divergence, tv_distance, wasserstein1, DirichletParams, SimplexGrid, SimplexPoint,
};
pub use synthetic::{generate, GeneratorSpec};

pub type SimplexPointF64 = SimplexPoint<f64>;
pub type SimplexGridF64 = SimplexGrid<f64>;
pub type DirichletParamsF64 = DirichletParams<f64>;
pub type LabeledExampleF64 = LabeledExample<f64>;
pub type ModelF64 = Model<f64>;
pub type PredictionF64 = Prediction<f64>;
pub type TrainConfigF64 = TrainConfig<f64>;
pub type CalibratedPredictorF64 = CalibratedPredictor<f64>;
pub type CredalRegionF64 = CredalRegion<f64>;
pub type NoiseSpecF64 = NoiseSpec<f64>;

pub type SimplexPointF32 = SimplexPoint<f32>;
pub type DirichletParamsF32 = DirichletParams<f32>;
pub type ModelF32 = Model<f32>;
pub type CalibratedPredictorF32 = CalibratedPredictor<f32>;
