//! Split-conformal calibration of credal set predictors.
//!
//! Given a trained model and a nonconformity function `f(x, lambda)`, the
//! calibration scores `E = { f(x_i, lambda_i) }` of held-out data determine a
//! threshold `q`: the `ceil((1 + n)(1 - alpha))`-th smallest score. The credal
//! set for a new input is the sublevel set
//!
//! ```text
//! { lambda in simplex : f(x_new, lambda) < q }
//! ```
//!
//! which contains the true label distribution with probability at least
//! `1 - alpha` under exchangeability. The comparison is strict, so grid points
//! whose score ties `q` exactly are excluded. When the index exceeds `n` the
//! quantile is undefined and `q = +inf` (the whole simplex).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::predictors::{LabeledExample, Model, ModelOrder, Prediction};
use crate::scalar::Real;
use crate::serde_ext::{extended_float, extended_float_opt};
use crate::simplex::{
    dirichlet_relative_nonconformity, grid_size, inner_score, kl_divergence, tv_distance,
    wasserstein1, GridDescriptor, SimplexGrid, SimplexPoint,
};

/// The nonconformity functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreKind {
    /// Total variation between label and prediction.
    #[serde(rename = "TV")]
    Tv,
    /// `KL(label || prediction)`.
    #[serde(rename = "KL")]
    Kl,
    /// 1-Wasserstein over ordered classes.
    #[serde(rename = "WS")]
    Ws,
    /// One minus the inner product.
    #[serde(rename = "INNER")]
    Inner,
    /// One minus the Dirichlet relative likelihood (second order).
    #[serde(rename = "SO")]
    So,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 5] = [
        ScoreKind::Tv,
        ScoreKind::Kl,
        ScoreKind::Ws,
        ScoreKind::Inner,
        ScoreKind::So,
    ];

    pub fn required_order(self) -> ModelOrder {
        match self {
            ScoreKind::So => ModelOrder::Second,
            _ => ModelOrder::First,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Tv => "TV",
            ScoreKind::Kl => "KL",
            ScoreKind::Ws => "WS",
            ScoreKind::Inner => "INNER",
            ScoreKind::So => "SO",
        }
    }

    fn mismatch(self) -> Error {
        Error::KindModelMismatch {
            kind: self.as_str().into(),
            required: self.required_order().to_string(),
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TV" => Ok(ScoreKind::Tv),
            "KL" => Ok(ScoreKind::Kl),
            "WS" => Ok(ScoreKind::Ws),
            "INNER" => Ok(ScoreKind::Inner),
            "SO" => Ok(ScoreKind::So),
            other => Err(Error::InvalidArgument(format!("unknown score kind '{other}'"))),
        }
    }
}

/// Nonconformity of `lambda` given an already computed model output.
pub fn score_prediction<T: Real>(
    kind: ScoreKind,
    prediction: &Prediction<T>,
    lambda: &SimplexPoint<T>,
) -> Result<T> {
    match (kind, prediction) {
        (ScoreKind::Tv, Prediction::Distribution(g)) => tv_distance(lambda, g),
        (ScoreKind::Kl, Prediction::Distribution(g)) => kl_divergence(lambda, g),
        (ScoreKind::Ws, Prediction::Distribution(g)) => wasserstein1(lambda, g),
        (ScoreKind::Inner, Prediction::Distribution(g)) => inner_score(lambda, g),
        (ScoreKind::So, Prediction::Dirichlet(theta)) => {
            dirichlet_relative_nonconformity(lambda, theta)
        }
        _ => Err(kind.mismatch()),
    }
}

/// Nonconformity `f(x, lambda)`.
pub fn score<T: Real>(
    model: &Model<T>,
    kind: ScoreKind,
    x: &[T],
    lambda: &SimplexPoint<T>,
) -> Result<T> {
    if model.order() != kind.required_order() {
        return Err(kind.mismatch());
    }
    score_prediction(kind, &model.predict(x)?, lambda)
}

/// `ceil((1 + n)(1 - alpha))`, robust to representation error of `alpha`:
/// products within `1e-9` (relative) of an integer are snapped to it.
pub fn conformal_index(n: usize, alpha: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - alpha);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Calibration scores, sorted ascending; duplicates are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
pub struct ScoreSet<T> {
    scores: Vec<T>,
}

/// The quantile rule evaluated for a given rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold<T> {
    /// 1-based order statistic `ceil((1 + n)(1 - alpha))`.
    pub index: usize,
    /// `index / n`; exceeds one exactly when `q` is infinite.
    pub alpha_prime: T,
    pub q: T,
}

impl<T: Real> ScoreSet<T> {
    pub fn new(mut scores: Vec<T>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteScore);
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn threshold(&self, alpha: T) -> Result<Threshold<T>> {
        check_alpha(alpha)?;
        let n = self.scores.len();
        let index = conformal_index(n, alpha.as_f64());
        let alpha_prime = T::from_usize_lossy(index) / T::from_usize_lossy(n);
        let q = match index {
            0 => T::neg_infinity(),
            i if i > n => T::infinity(),
            i => self.scores[i - 1],
        };
        Ok(Threshold {
            index,
            alpha_prime,
            q,
        })
    }
}

impl<T: Real> TryFrom<Vec<T>> for ScoreSet<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T> From<ScoreSet<T>> for Vec<T> {
    fn from(s: ScoreSet<T>) -> Self {
        s.scores
    }
}

fn check_kind<T: Real>(model: &Model<T>, kind: ScoreKind) -> Result<()> {
    if model.order() == kind.required_order() {
        Ok(())
    } else {
        Err(kind.mismatch())
    }
}

/// Scores of every calibration example against its observed label.
pub fn calibration_scores<T: Real>(
    model: &Model<T>,
    kind: ScoreKind,
    calib: &[LabeledExample<T>],
) -> Result<ScoreSet<T>> {
    check_kind(model, kind)?;
    if calib.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let scores = calib
        .par_iter()
        .map(|ex| score(model, kind, &ex.features, &ex.label_dist))
        .collect::<Result<Vec<T>>>()?;
    ScoreSet::new(scores)
}

/// A model together with its calibrated threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct CalibratedPredictor<T> {
    pub model: Model<T>,
    pub kind: ScoreKind,
    pub alpha: T,
    pub alpha_prime: T,
    #[serde(with = "extended_float")]
    pub threshold_q: T,
    pub calib_size: usize,
    pub quantile_index: usize,
}

/// Calibrates `model` on `calib` at miscoverage rate `alpha`.
///
/// An order-statistic index beyond the calibration size is not an error:
/// the threshold becomes `+inf` and [`CalibratedPredictor::is_degenerate`]
/// reports it.
pub fn calibrate<T: Real>(
    model: Model<T>,
    kind: ScoreKind,
    calib: &[LabeledExample<T>],
    alpha: T,
) -> Result<CalibratedPredictor<T>> {
    check_alpha(alpha)?;
    let scores = calibration_scores(&model, kind, calib)?;
    CalibratedPredictor::from_scores(model, kind, &scores, alpha)
}

impl<T: Real> CalibratedPredictor<T> {
    pub fn from_scores(
        model: Model<T>,
        kind: ScoreKind,
        scores: &ScoreSet<T>,
        alpha: T,
    ) -> Result<Self> {
        check_kind(&model, kind)?;
        let t = scores.threshold(alpha)?;
        Ok(Self {
            model,
            kind,
            alpha,
            alpha_prime: t.alpha_prime,
            threshold_q: t.q,
            calib_size: scores.len(),
            quantile_index: t.index,
        })
    }

    /// True when the quantile index exceeded the calibration size.
    pub fn is_degenerate(&self) -> bool {
        self.quantile_index > self.calib_size
    }

    pub fn score(&self, x: &[T], lambda: &SimplexPoint<T>) -> Result<T> {
        score(&self.model, self.kind, x, lambda)
    }

    /// `f(x, lambda) < q`.
    pub fn contains(&self, x: &[T], lambda: &SimplexPoint<T>) -> Result<bool> {
        if self.threshold_q == T::infinity() {
            check_dims(self.model.classes(), lambda.k())?;
            return Ok(true);
        }
        Ok(self.score(x, lambda)? < self.threshold_q)
    }

    /// The implicit credal set for `x`.
    pub fn region(&self, x: &[T]) -> Result<CredalRegion<T>> {
        Ok(CredalRegion {
            kind: self.kind,
            alpha: self.alpha,
            threshold: self.threshold_q,
            prediction: self.model.predict(x)?,
            grid: None,
            mask: None,
            efficiency: None,
        })
    }

    /// The credal set for `x` evaluated on every point of `grid`.
    pub fn materialize(&self, x: &[T], grid: &SimplexGrid<T>) -> Result<CredalRegion<T>> {
        let mut region = self.region(x)?;
        region.materialize(grid)?;
        Ok(region)
    }

    /// Fraction of `test` whose observed label lies in its credal set.
    pub fn empirical_coverage(&self, test: &[LabeledExample<T>]) -> Result<T> {
        self.empirical_coverage_by(test, |ex| &ex.label_dist)
    }

    /// Coverage against the label chosen by `target` (e.g. a clean label).
    pub fn empirical_coverage_by<F>(&self, test: &[LabeledExample<T>], target: F) -> Result<T>
    where
        F: Fn(&LabeledExample<T>) -> &SimplexPoint<T> + Sync,
    {
        if test.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let hits = test
            .par_iter()
            .map(|ex| self.contains(&ex.features, target(ex)).map(usize::from))
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(test.len()))
    }
}

/// A credal set: the sublevel set `{ lambda : score(prediction, lambda) < threshold }`,
/// optionally materialized on a simplex grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
#[serde(try_from = "RegionDocument<T>", into = "RegionDocument<T>")]
pub struct CredalRegion<T> {
    pub kind: ScoreKind,
    pub alpha: T,
    pub threshold: T,
    pub prediction: Prediction<T>,
    grid: Option<GridDescriptor>,
    mask: Option<Vec<bool>>,
    efficiency: Option<T>,
}

impl<T: Real> CredalRegion<T> {
    pub fn contains(&self, lambda: &SimplexPoint<T>) -> Result<bool> {
        check_dims(self.prediction.k(), lambda.k())?;
        if self.threshold == T::infinity() {
            return Ok(true);
        }
        Ok(score_prediction(self.kind, &self.prediction, lambda)? < self.threshold)
    }

    pub fn materialize(&mut self, grid: &SimplexGrid<T>) -> Result<()> {
        check_dims(self.prediction.k(), grid.k())?;
        let mask = grid
            .points()
            .par_iter()
            .map(|p| self.contains(p))
            .collect::<Result<Vec<bool>>>()?;
        let inside = mask.iter().filter(|&&b| b).count();
        self.efficiency = Some(T::from_usize_lossy(inside) / T::from_usize_lossy(mask.len()));
        self.mask = Some(mask);
        self.grid = Some(grid.descriptor());
        Ok(())
    }

    pub fn grid(&self) -> Option<GridDescriptor> {
        self.grid
    }

    /// Membership of each grid point, in grid order.
    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Fraction of grid points inside the set.
    pub fn efficiency(&self) -> Option<T> {
        self.efficiency
    }
}

pub const REGION_FORMAT: &str = "credal-region";
pub const REGION_VERSION: u32 = 1;

/// Serialized form of a [`CredalRegion`]. The mask is run-length encoded as
/// alternating run lengths starting with a (possibly empty) run of points
/// outside the set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct RegionDocument<T> {
    pub format: String,
    pub version: u32,
    pub kind: ScoreKind,
    pub alpha: T,
    #[serde(with = "extended_float")]
    pub threshold: T,
    pub prediction: Prediction<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<Vec<u64>>,
    #[serde(
        default,
        with = "extended_float_opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub efficiency: Option<T>,
}

pub fn rle_encode(mask: &[bool]) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for &b in mask {
        if b == current {
            len += 1;
        } else {
            runs.push(len);
            current = b;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[u64]) -> Vec<bool> {
    let mut out = Vec::with_capacity(runs.iter().sum::<u64>() as usize);
    for (i, &len) in runs.iter().enumerate() {
        out.extend(std::iter::repeat(i % 2 == 1).take(len as usize));
    }
    out
}

impl<T: Real> From<CredalRegion<T>> for RegionDocument<T> {
    fn from(r: CredalRegion<T>) -> Self {
        RegionDocument {
            format: REGION_FORMAT.into(),
            version: REGION_VERSION,
            kind: r.kind,
            alpha: r.alpha,
            threshold: r.threshold,
            prediction: r.prediction,
            grid: r.grid,
            mask_rle: r.mask.as_deref().map(rle_encode),
            efficiency: r.efficiency,
        }
    }
}

impl<T: Real> TryFrom<RegionDocument<T>> for CredalRegion<T> {
    type Error = Error;

    fn try_from(doc: RegionDocument<T>) -> Result<Self> {
        if doc.format != REGION_FORMAT || doc.version != REGION_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported region document {} v{}",
                doc.format, doc.version
            )));
        }
        let expected = match doc.prediction {
            Prediction::Distribution(_) => ModelOrder::First,
            Prediction::Dirichlet(_) => ModelOrder::Second,
        };
        if doc.kind.required_order() != expected {
            return Err(doc.kind.mismatch());
        }
        let (grid, mask, efficiency) = match (doc.grid, doc.mask_rle) {
            (Some(g), Some(runs)) => {
                check_dims(doc.prediction.k(), g.k)?;
                let mask = rle_decode(&runs);
                if mask.len() as u128 != grid_size(g.k, g.n) {
                    return Err(Error::InvalidArgument(
                        "mask length does not match grid size".into(),
                    ));
                }
                let inside = mask.iter().filter(|&&b| b).count();
                let eff = T::from_usize_lossy(inside) / T::from_usize_lossy(mask.len());
                if let Some(stored) = doc.efficiency {
                    if stored != eff {
                        return Err(Error::InvalidArgument(
                            "stored efficiency disagrees with mask".into(),
                        ));
                    }
                }
                (Some(g), Some(mask), Some(eff))
            }
            (None, None) => (None, None, None),
            _ => {
                return Err(Error::InvalidArgument(
                    "grid and mask must be given together".into(),
                ))
            }
        };
        Ok(CredalRegion {
            kind: doc.kind,
            alpha: doc.alpha,
            threshold: doc.threshold,
            prediction: doc.prediction,
            grid,
            mask,
            efficiency,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::{FirstOrderModel, Network, SecondOrderModel};
    use crate::simplex::{dirichlet_mode, DirichletParams};
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> SimplexPoint<f64> {
        SimplexPoint::new(v.to_vec()).unwrap()
    }

    /// First-order model predicting `softmax(bias)` regardless of input.
    fn constant_model(bias: &[f64]) -> Model<f64> {
        let k = bias.len();
        let mut params = vec![0.0; k];
        params.extend_from_slice(bias);
        Model::First(FirstOrderModel::from_network(Network {
            input_dim: 1,
            hidden_width: 0,
            classes: k,
            params,
        }))
    }

    fn uniform_model(k: usize) -> Model<f64> {
        constant_model(&vec![0.0; k])
    }

    fn calib_with_tv_scores(scores: &[f64]) -> Vec<LabeledExample<f64>> {
        // Against a uniform binary prediction, TV((0.5 + s, 0.5 - s), u) = s.
        scores
            .iter()
            .map(|&s| LabeledExample::new(vec![0.0], pt(&[0.5 + s, 0.5 - s])))
            .collect()
    }

    #[test]
    fn score_examples() {
        let m = uniform_model(3);
        let u = SimplexPoint::uniform(3).unwrap();
        assert!(score(&m, ScoreKind::Tv, &[1.0], &u).unwrap().abs() < 1e-15);
        assert!((score(&m, ScoreKind::Inner, &[1.0], &u).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let so = Model::Second(SecondOrderModel::init(2, 0, 3, 4));
        let theta = match so.predict(&[0.3, -0.2]).unwrap() {
            Prediction::Dirichlet(t) => t,
            _ => unreachable!(),
        };
        let s: f64 = score(&so, ScoreKind::So, &[0.3, -0.2], &dirichlet_mode(&theta)).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn kind_model_mismatch() {
        let m = uniform_model(3);
        let u = SimplexPoint::uniform(3).unwrap();
        assert!(matches!(
            score(&m, ScoreKind::So, &[1.0], &u),
            Err(Error::KindModelMismatch { .. })
        ));
        let so = Model::Second(SecondOrderModel::init(1, 0, 3, 0));
        assert!(matches!(
            calibrate(so, ScoreKind::Kl, &calib_with_tv_scores(&[0.1]), 0.1),
            Err(Error::KindModelMismatch { .. })
        ));
    }

    #[test]
    fn calibrate_n500_alpha_01() {
        let scores: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let p = calibrate(uniform_model(2), ScoreKind::Tv, &calib_with_tv_scores(&scores), 0.1).unwrap();
        assert_eq!(p.quantile_index, 451);
        assert_eq!(p.alpha_prime, 451.0 / 500.0);
        assert!((p.alpha_prime - 0.902).abs() < 1e-15);
        assert!((p.threshold_q - 450.5 / 1000.0).abs() < 1e-12);
        assert!(!p.is_degenerate());
    }

    #[test]
    fn calibrate_n9_alpha_01_takes_max() {
        let scores = [0.05, 0.4, 0.1, 0.2, 0.15, 0.3, 0.25, 0.35, 0.01];
        let p = calibrate(uniform_model(2), ScoreKind::Tv, &calib_with_tv_scores(&scores), 0.1).unwrap();
        assert_eq!(p.quantile_index, 9);
        assert!((p.threshold_q - 0.4).abs() < 1e-12);
    }

    #[test]
    fn calibrate_n5_alpha_005_is_degenerate() {
        let scores = [0.1, 0.2, 0.3, 0.4, 0.45];
        let p = calibrate(uniform_model(2), ScoreKind::Tv, &calib_with_tv_scores(&scores), 0.05).unwrap();
        assert_eq!(p.quantile_index, 6);
        assert!(p.is_degenerate());
        assert_eq!(p.threshold_q, f64::INFINITY);
        let grid = SimplexGrid::build(2, 20).unwrap();
        assert_eq!(p.materialize(&[0.0], &grid).unwrap().efficiency(), Some(1.0));
    }

    #[test]
    fn calibrate_errors() {
        assert!(matches!(
            calibrate(uniform_model(2), ScoreKind::Tv, &[], 0.1),
            Err(Error::EmptyCalibration)
        ));
        assert!(calibrate(uniform_model(2), ScoreKind::Tv, &calib_with_tv_scores(&[0.1]), 1.0).is_err());
        assert!(calibrate(uniform_model(2), ScoreKind::Tv, &calib_with_tv_scores(&[0.1]), 0.0).is_err());
        assert!(matches!(ScoreSet::new(vec![0.1, f64::NAN]), Err(Error::NonFiniteScore)));
    }

    fn predictor_with_q(model: Model<f64>, kind: ScoreKind, q: f64) -> CalibratedPredictor<f64> {
        CalibratedPredictor {
            model,
            kind,
            alpha: 0.1,
            alpha_prime: 0.9,
            threshold_q: q,
            calib_size: 10,
            quantile_index: 9,
        }
    }

    #[test]
    fn contains_examples() {
        let m = constant_model(&[0.5_f64.ln(), 0.3_f64.ln(), 0.2_f64.ln()]);
        let p_inf = predictor_with_q(m.clone(), ScoreKind::Tv, f64::INFINITY);
        assert!(p_inf.contains(&[0.0], &pt(&[0.0, 0.0, 1.0])).unwrap());

        let g = match m.predict(&[0.0]).unwrap() {
            Prediction::Distribution(g) => g,
            _ => unreachable!(),
        };
        let p = predictor_with_q(m.clone(), ScoreKind::Tv, 0.1);
        assert!(p.contains(&[0.0], &g).unwrap());
        // TV((0.2,0.3,0.5), (0.5,0.3,0.2)) = 0.3 >= 0.1
        assert!(!p.contains(&[0.0], &pt(&[0.2, 0.3, 0.5])).unwrap());
        // Strictness: a label at exactly the threshold is excluded.
        let p03 = predictor_with_q(m, ScoreKind::Tv, 0.3);
        let s = p03.score(&[0.0], &pt(&[0.2, 0.3, 0.5])).unwrap();
        let at = predictor_with_q(p03.model.clone(), ScoreKind::Tv, s);
        assert!(!at.contains(&[0.0], &pt(&[0.2, 0.3, 0.5])).unwrap());
    }

    #[test]
    fn materialize_extremes() {
        let grid = SimplexGrid::build(3, 30).unwrap();
        let m = uniform_model(3);
        let full = predictor_with_q(m.clone(), ScoreKind::Tv, f64::INFINITY);
        assert_eq!(full.materialize(&[0.0], &grid).unwrap().efficiency(), Some(1.0));
        let empty = predictor_with_q(m.clone(), ScoreKind::Tv, 0.0);
        assert_eq!(empty.materialize(&[0.0], &grid).unwrap().efficiency(), Some(0.0));
        let wrong = SimplexGrid::build(4, 3).unwrap();
        assert!(matches!(
            full.materialize(&[0.0], &wrong),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn materialize_tv_ball_matches_exhaustive_count() {
        let grid = SimplexGrid::build(3, 200).unwrap();
        let p = predictor_with_q(uniform_model(3), ScoreKind::Tv, 0.2);
        let region = p.materialize(&[0.0], &grid).unwrap();
        // Independent count over integer compositions: TV(i / n, uniform) < 0.2
        // <=>  sum |3 i_k - n| < 1.2 n = 240. Lattice points exactly on the
        // boundary are counted separately since float rounding decides them.
        let n = 200i64;
        let (mut strict, mut ties) = (0usize, 0usize);
        for i in 0..=n {
            for j in 0..=(n - i) {
                let l = n - i - j;
                let dev = (3 * i - n).abs() + (3 * j - n).abs() + (3 * l - n).abs();
                if dev < 240 {
                    strict += 1;
                } else if dev == 240 {
                    ties += 1;
                }
            }
        }
        let count = (region.efficiency().unwrap() * 20301.0).round() as usize;
        assert!(count >= strict && count <= strict + ties, "{count} {strict} {ties}");
        if ties == 0 {
            assert_eq!(count, strict);
        }
        let mask = region.mask().unwrap();
        for (i, lambda) in grid.points().iter().enumerate() {
            assert_eq!(mask[i], p.contains(&[0.0], lambda).unwrap());
        }
    }

    #[test]
    fn tv_region_is_discretely_convex_along_lattice_lines() {
        let grid = SimplexGrid::build(3, 50).unwrap();
        let m = constant_model(&[0.4, -0.3, 0.1]);
        let p = predictor_with_q(m, ScoreKind::Tv, 0.25);
        let region = p.materialize(&[0.0], &grid).unwrap();
        let mask = region.mask().unwrap();
        let n = 50usize;
        let mut inside = std::collections::HashSet::new();
        for i in 0..grid.len() {
            if mask[i] {
                let c = grid.composition(i);
                inside.insert((c[0], c[1]));
            }
        }
        // Along each line with one coordinate fixed, members form an interval.
        for fixed_axis in 0..3 {
            for v in 0..=n {
                let mut members: Vec<usize> = Vec::new();
                for t in 0..=(n - v) {
                    let c = match fixed_axis {
                        0 => [v, t, n - v - t],
                        1 => [t, v, n - v - t],
                        _ => [t, n - v - t, v],
                    };
                    if inside.contains(&(c[0], c[1])) {
                        members.push(t);
                    }
                }
                if let (Some(&lo), Some(&hi)) = (members.first(), members.last()) {
                    assert_eq!(members.len(), hi - lo + 1, "axis {fixed_axis} value {v}");
                }
            }
        }
    }

    #[test]
    fn coverage_examples() {
        let calib = calib_with_tv_scores(&(0..500).map(|i| i as f64 / 1000.0).collect::<Vec<_>>());
        let p = calibrate(uniform_model(2), ScoreKind::Tv, &calib, 0.1).unwrap();
        let cov = p.empirical_coverage(&calib).unwrap();
        assert!(cov >= 0.9, "{cov}");
        assert_eq!(cov, 450.0 / 500.0);
        let full = predictor_with_q(uniform_model(2), ScoreKind::Tv, f64::INFINITY);
        assert_eq!(full.empirical_coverage(&calib).unwrap(), 1.0);
        assert!(matches!(full.empirical_coverage(&[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn region_document_round_trip() {
        let grid = SimplexGrid::build(3, 40).unwrap();
        let p = predictor_with_q(constant_model(&[1.0, 0.0, -0.5]), ScoreKind::Kl, 0.3);
        let region = p.materialize(&[0.0], &grid).unwrap();
        let text = serde_json::to_string(&region).unwrap();
        let back: CredalRegion<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, region);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);

        let inf = predictor_with_q(uniform_model(3), ScoreKind::Tv, f64::INFINITY)
            .region(&[0.0])
            .unwrap();
        let text = serde_json::to_string(&inf).unwrap();
        assert!(text.contains(r#""threshold":"inf""#));
        assert_eq!(serde_json::from_str::<CredalRegion<f64>>(&text).unwrap(), inf);
    }

    #[test]
    fn region_document_rejects_bad_masks() {
        let grid = SimplexGrid::build(3, 4).unwrap();
        let region = predictor_with_q(uniform_model(3), ScoreKind::Tv, 0.3)
            .materialize(&[0.0], &grid)
            .unwrap();
        let mut v = serde_json::to_value(&region).unwrap();
        v["mask_rle"] = serde_json::json!([1, 2]);
        assert!(serde_json::from_value::<CredalRegion<f64>>(v).is_err());
        let mut v = serde_json::to_value(&region).unwrap();
        v["kind"] = serde_json::json!("SO");
        assert!(serde_json::from_value::<CredalRegion<f64>>(v).is_err());
    }

    #[test]
    fn second_order_region_contains_mode() {
        let theta = DirichletParams::new(vec![4.0, 2.0, 3.0]).unwrap();
        let region = CredalRegion {
            kind: ScoreKind::So,
            alpha: 0.1,
            threshold: 0.5,
            prediction: Prediction::Dirichlet(theta.clone()),
            grid: None,
            mask: None,
            efficiency: None,
        };
        assert!(region.contains(&dirichlet_mode(&theta)).unwrap());
        assert!(!region.contains(&pt(&[0.0, 1.0, 0.0])).unwrap());
    }

    /// Naive oracle: exact rational index, 1-based order statistic.
    fn oracle_threshold(scores: &[f64], n: usize, alpha_num: u64, alpha_den: u64) -> (usize, f64) {
        let num = (n as u64 + 1) * (alpha_den - alpha_num);
        let index = num.div_ceil(alpha_den) as usize;
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = if index > n { f64::INFINITY } else { sorted[index - 1] };
        (index, q)
    }

    #[test]
    fn threshold_matches_sort_index_oracle() {
        use rand::Rng;
        let mut rng = crate::random::rng_from_seed(99);
        for _ in 0..1000 {
            let n = rng.gen_range(1..400);
            let alpha_num = rng.gen_range(1..1000u64);
            let alpha = alpha_num as f64 / 1000.0;
            // Coarse values so ties occur.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..50) as f64 / 50.0).collect();
            let (index, q) = oracle_threshold(&scores, n, alpha_num, 1000);
            let t = ScoreSet::new(scores).unwrap().threshold(alpha).unwrap();
            assert_eq!(t.index, index, "n={n} alpha={alpha}");
            assert_eq!(t.q, q);
        }
    }

    #[test]
    fn exchangeable_scores_cover_at_nominal_rate() {
        use rand::Rng;
        let mut rng = crate::random::rng_from_seed(2024);
        let (n, reps, n_test, alpha) = (100usize, 1000usize, 100usize, 0.1);
        let mut total = 0.0;
        for _ in 0..reps {
            let calib: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let q = ScoreSet::new(calib).unwrap().threshold(alpha).unwrap().q;
            let hits = (0..n_test).filter(|_| rng.gen::<f64>() < q).count();
            total += hits as f64 / n_test as f64;
        }
        let mean = total / reps as f64;
        assert!(mean >= 0.9 - 0.01 && mean <= 0.9 + 1.0 / 101.0 + 0.01, "{mean}");
    }

    #[test]
    fn rle_round_trip_edges() {
        for mask in [vec![], vec![true], vec![false], vec![true, true, false, true]] {
            assert_eq!(rle_decode(&rle_encode(&mask)), mask);
        }
        assert_eq!(rle_encode(&[true, true, false]), vec![0, 2, 1]);
    }

    proptest! {
        #[test]
        fn rle_round_trip(mask in proptest::collection::vec(any::<bool>(), 0..300)) {
            prop_assert_eq!(rle_decode(&rle_encode(&mask)), mask);
        }

        #[test]
        fn threshold_monotone_in_alpha(
            scores in proptest::collection::vec(0.0f64..1.0, 1..200),
            a in 0.01f64..0.99, b in 0.01f64..0.99,
        ) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let set = ScoreSet::new(scores).unwrap();
            prop_assert!(set.threshold(lo).unwrap().q >= set.threshold(hi).unwrap().q);
        }
    }

    #[test]
    fn efficiency_monotone_in_alpha() {
        let grid = SimplexGrid::build(3, 40).unwrap();
        let m = constant_model(&[0.3, 0.0, -0.4]);
        let calib: Vec<_> = (0..60)
            .map(|i| {
                let a = 0.1 + 0.8 * (i as f64 / 60.0);
                LabeledExample::new(vec![0.0], pt(&[a, (1.0 - a) * 0.3, (1.0 - a) * 0.7]))
            })
            .collect();
        for kind in [ScoreKind::Tv, ScoreKind::Kl, ScoreKind::Ws, ScoreKind::Inner] {
            let mut last_q = f64::INFINITY;
            let mut last_eff = 1.0;
            for alpha in [0.02, 0.05, 0.1, 0.2, 0.4, 0.7] {
                let p = calibrate(m.clone(), kind, &calib, alpha).unwrap();
                let eff = p.materialize(&[0.0], &grid).unwrap().efficiency().unwrap();
                assert!(p.threshold_q <= last_q && eff <= last_eff, "{kind} {alpha}");
                last_q = p.threshold_q;
                last_eff = eff;
            }
        }
    }
}
