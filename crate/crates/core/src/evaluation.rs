//! Experiment harness: repeated random splits over seeds, label corruption
//! levels, score kinds and miscoverage rates.
//!
//! For each `(seed, m)` the dataset is optionally corrupted with `m` samples
//! per label, shuffled and split into train/calibration/test parts, one model
//! per required order is trained, and every `(kind, alpha)` cell records the
//! calibrated threshold, the test coverage and (for feasible grids) the mean
//! efficiency of the test credal sets. Cells are keyed by their coordinates,
//! so the report does not depend on execution order.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{calibration_scores, score_prediction, ScoreKind};
use crate::error::{Error, Result};
use crate::io::read_dataset;
use crate::noise::corrupt_dataset;
use crate::predictors::{dataset_dims, train, LabeledExample, Model, ModelOrder, TrainConfig};
use crate::random::{derive_seed, rng_from_seed};
use crate::serde_ext::{extended_float, extended_float_opt, format_float};
use crate::simplex::{grid_size, SimplexGrid, DEFAULT_RESOURCE_CAP};
use crate::synthetic::{generate, GeneratorSpec};

// Sub-stream identifiers.
const SPLIT_STREAM: u64 = 0x5_0117;
const CORRUPT_STREAM: u64 = 0xC0_4427;
const TRAIN_STREAM: u64 = 0x7_4A19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    File { path: PathBuf },
    Synthetic(GeneratorSpec),
}

/// Which label a test example's credal set is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageTarget {
    /// The ground-truth label when the data carries one.
    #[default]
    Clean,
    /// The observed (possibly corrupted) label.
    Noisy,
}

fn default_split() -> [f64; 3] {
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
}
fn default_cap() -> u64 {
    DEFAULT_RESOURCE_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    /// Samples per label for corruption; empty runs on the labels as given.
    #[serde(default)]
    pub ms: Vec<u64>,
    pub alphas: Vec<f64>,
    pub kinds: Vec<ScoreKind>,
    pub seeds: Vec<u64>,
    /// Train, calibration and test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub train_config: TrainConfig<f64>,
    /// Overrides `train_config` for second-order models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_order_config: Option<TrainConfig<f64>>,
    /// Grid subdivisions for efficiency; 0 reports thresholds only.
    #[serde(default)]
    pub grid_n: usize,
    #[serde(default)]
    pub coverage_target: CoverageTarget,
    #[serde(default = "default_cap")]
    pub resource_cap: u64,
}

impl ExperimentSpec {
    /// A synthetic experiment with the default split and model settings.
    pub fn synthetic(generator: GeneratorSpec, kinds: Vec<ScoreKind>, alphas: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            dataset: DatasetSource::Synthetic(generator),
            ms: Vec::new(),
            alphas,
            kinds,
            seeds,
            split: default_split(),
            train_config: TrainConfig::default(),
            second_order_config: None,
            grid_n: 0,
            coverage_target: CoverageTarget::Clean,
            resource_cap: DEFAULT_RESOURCE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.split.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidArgument("split fractions must be positive".into()));
        }
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("split fractions must sum to 1".into()));
        }
        if self.alphas.is_empty() || self.kinds.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("alphas, kinds and seeds must be nonempty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidArgument(format!("alpha {a} outside (0, 1)")));
        }
        if self.ms.contains(&0) {
            return Err(Error::InvalidArgument("m must be >= 1".into()));
        }
        self.train_config.validate()?;
        if let Some(c) = &self.second_order_config {
            c.validate()?;
        }
        Ok(())
    }

    fn config_for(&self, order: ModelOrder) -> &TrainConfig<f64> {
        match (order, &self.second_order_config) {
            (ModelOrder::Second, Some(c)) => c,
            _ => &self.train_config,
        }
    }

    pub fn load_dataset(&self) -> Result<Vec<LabeledExample<f64>>> {
        match &self.dataset {
            DatasetSource::File { path } => read_dataset(path),
            DatasetSource::Synthetic(g) => Ok(generate::<f64>(g)?.data),
        }
    }
}

/// Index sets of a random train/calibration/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it by `fractions`. Calibration and
/// test sizes are rounded; training receives the remainder.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(seed, SPLIT_STREAM)));
    let n_calib = (n as f64 * fractions[1]).round() as usize;
    let n_test = (n as f64 * fractions[2]).round() as usize;
    if n_calib == 0 || n_test == 0 || n_calib + n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "{n} examples are too few for split {fractions:?}"
        )));
    }
    let n_train = n - n_calib - n_test;
    let test = idx.split_off(n_train + n_calib);
    let calib = idx.split_off(n_train);
    Ok(Split {
        train: idx,
        calib,
        test,
    })
}

pub fn select<T: Clone>(data: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

/// One `(kind, alpha, m, seed)` result. `m = 0` marks uncorrupted labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: ScoreKind,
    pub alpha: f64,
    pub m: u64,
    pub seed: u64,
    pub calib_size: usize,
    pub test_size: usize,
    pub quantile_index: usize,
    pub alpha_prime: f64,
    #[serde(with = "extended_float")]
    pub threshold_q: f64,
    pub coverage: Option<f64>,
    #[serde(default, with = "extended_float_opt")]
    pub mean_efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Cell {
    fn failed(kind: ScoreKind, alpha: f64, m: u64, seed: u64, error: String) -> Self {
        Cell {
            kind,
            alpha,
            m,
            seed,
            calib_size: 0,
            test_size: 0,
            quantile_index: 0,
            alpha_prime: f64::NAN,
            threshold_q: f64::NAN,
            coverage: None,
            mean_efficiency: None,
            error: Some(error),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub cells: Vec<Cell>,
    /// Set when efficiency was requested but the grid exceeded the cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

struct Job {
    seed: u64,
    m: u64,
}

/// Runs the full sweep. Per-cell failures are recorded in the report rather
/// than aborting; only spec and dataset errors are returned.
pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let data = spec.load_dataset()?;
    let (_, k) = dataset_dims(&data)?;

    let mut note = None;
    let grid = if spec.grid_n > 0 {
        if grid_size(k, spec.grid_n) <= u128::from(spec.resource_cap) {
            Some(SimplexGrid::<f64>::build_with_cap(k, spec.grid_n, spec.resource_cap)?)
        } else {
            note = Some(format!(
                "grid k={k} n={} exceeds resource cap {}; efficiency omitted",
                spec.grid_n, spec.resource_cap
            ));
            None
        }
    } else {
        None
    };

    let ms: Vec<u64> = if spec.ms.is_empty() { vec![0] } else { spec.ms.clone() };
    let jobs: Vec<Job> = spec
        .seeds
        .iter()
        .flat_map(|&seed| ms.iter().map(move |&m| Job { seed, m }))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|job| run_job(spec, &data, grid.as_ref(), job))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(Report { cells, note })
}

fn describe(e: &Error) -> String {
    format!("{}: {e}", e.code())
}

fn run_job(
    spec: &ExperimentSpec,
    data: &[LabeledExample<f64>],
    grid: Option<&SimplexGrid<f64>>,
    job: &Job,
) -> Vec<Cell> {
    let fail_all = |err: &Error| -> Vec<Cell> {
        spec.kinds
            .iter()
            .flat_map(|&kind| {
                spec.alphas
                    .iter()
                    .map(move |&a| Cell::failed(kind, a, job.m, job.seed, describe(err)))
            })
            .collect()
    };

    let labelled = if job.m > 0 {
        let seed = derive_seed(derive_seed(job.seed, CORRUPT_STREAM), job.m);
        match corrupt_dataset(data, job.m, seed) {
            Ok(d) => d,
            Err(e) => return fail_all(&e),
        }
    } else {
        data.to_vec()
    };
    let split = match split_indices(labelled.len(), spec.split, job.seed) {
        Ok(s) => s,
        Err(e) => return fail_all(&e),
    };
    let train_set = select(&labelled, &split.train);
    let calib_set = select(&labelled, &split.calib);
    let test_set = select(&labelled, &split.test);

    let orders: BTreeSet<ModelOrder> = spec.kinds.iter().map(|k| k.required_order()).collect();
    let models: Vec<(ModelOrder, std::result::Result<Model<f64>, String>)> = orders
        .into_iter()
        .map(|order| {
            let mut cfg = spec.config_for(order).clone();
            cfg.seed = derive_seed(derive_seed(cfg.seed, TRAIN_STREAM), job.seed);
            let model = train(order, &train_set, &cfg)
                .map(|t| t.model)
                .map_err(|e| describe(&e));
            (order, model)
        })
        .collect();

    let mut cells = Vec::new();
    for &kind in &spec.kinds {
        let model = models
            .iter()
            .find(|(o, _)| *o == kind.required_order())
            .map(|(_, m)| m)
            .expect("a model per required order");
        let result = match model {
            Ok(model) => evaluate_kind(spec, model, kind, &calib_set, &test_set, grid, job)
                .map_err(|e| describe(&e)),
            Err(e) => Err(e.clone()),
        };
        match result {
            Ok(mut c) => cells.append(&mut c),
            Err(e) => cells.extend(
                spec.alphas
                    .iter()
                    .map(|&a| Cell::failed(kind, a, job.m, job.seed, e.clone())),
            ),
        }
    }
    cells
}

fn evaluate_kind(
    spec: &ExperimentSpec,
    model: &Model<f64>,
    kind: ScoreKind,
    calib: &[LabeledExample<f64>],
    test: &[LabeledExample<f64>],
    grid: Option<&SimplexGrid<f64>>,
    job: &Job,
) -> Result<Vec<Cell>> {
    let scores = calibration_scores(model, kind, calib)?;
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let predictions = test
        .iter()
        .map(|ex| model.predict(&ex.features))
        .collect::<Result<Vec<_>>>()?;
    let test_scores = test
        .iter()
        .zip(&predictions)
        .map(|(ex, p)| {
            let target = match spec.coverage_target {
                CoverageTarget::Clean => ex.clean_or_observed(),
                CoverageTarget::Noisy => &ex.label_dist,
            };
            score_prediction(kind, p, target)
        })
        .collect::<Result<Vec<f64>>>()?;
    // Per test example, grid scores sorted ascending so that membership
    // counts for every alpha are a binary search.
    let grid_scores: Option<Vec<Vec<f64>>> = match grid {
        Some(g) => Some(
            predictions
                .iter()
                .map(|p| {
                    let mut s = g
                        .points()
                        .iter()
                        .map(|l| score_prediction(kind, p, l))
                        .collect::<Result<Vec<f64>>>()?;
                    s.sort_by(f64::total_cmp);
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };

    spec.alphas
        .iter()
        .map(|&alpha| {
            let t = scores.threshold(alpha)?;
            let covered = test_scores.iter().filter(|&&s| s < t.q).count();
            let mean_efficiency = grid_scores.as_ref().map(|all| {
                let total: f64 = all
                    .iter()
                    .map(|s| s.partition_point(|&v| v < t.q) as f64 / s.len() as f64)
                    .sum();
                total / all.len() as f64
            });
            Ok(Cell {
                kind,
                alpha,
                m: job.m,
                seed: job.seed,
                calib_size: scores.len(),
                test_size: test.len(),
                quantile_index: t.index,
                alpha_prime: t.alpha_prime,
                threshold_q: t.q,
                coverage: Some(covered as f64 / test.len() as f64),
                mean_efficiency,
                error: None,
            })
        })
        .collect()
}

/// Mean, population standard deviation, min and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    #[serde(with = "extended_float")]
    pub mean: f64,
    #[serde(with = "extended_float")]
    pub std: f64,
    #[serde(with = "extended_float")]
    pub min: f64,
    #[serde(with = "extended_float")]
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() == 1 || !mean.is_finite() {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        Some(Stats {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kind: ScoreKind,
    pub alpha: f64,
    pub m: u64,
    pub runs: usize,
    pub failed: usize,
    pub coverage: Option<Stats>,
    pub threshold_q: Option<Stats>,
    pub efficiency: Option<Stats>,
}

/// Aggregates cells over seeds, one row per `(kind, alpha, m)` in order of
/// first appearance.
pub fn summarize(report: &Report) -> Vec<SummaryRow> {
    let mut keys: Vec<(ScoreKind, u64, u64)> = Vec::new();
    for c in &report.cells {
        let key = (c.kind, c.alpha.to_bits(), c.m);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(kind, alpha_bits, m)| {
            let group: Vec<&Cell> = report
                .cells
                .iter()
                .filter(|c| c.kind == kind && c.alpha.to_bits() == alpha_bits && c.m == m)
                .collect();
            let ok: Vec<&&Cell> = group.iter().filter(|c| c.is_ok()).collect();
            let coverage: Vec<f64> = ok.iter().filter_map(|c| c.coverage).collect();
            let thresholds: Vec<f64> = ok.iter().map(|c| c.threshold_q).collect();
            let eff: Vec<f64> = ok.iter().filter_map(|c| c.mean_efficiency).collect();
            SummaryRow {
                kind,
                alpha: f64::from_bits(alpha_bits),
                m,
                runs: group.len(),
                failed: group.len() - ok.len(),
                coverage: Stats::of(&coverage),
                threshold_q: Stats::of(&thresholds),
                efficiency: Stats::of(&eff),
            }
        })
        .collect()
}

/// Column order of [`report_to_csv`].
pub const CELL_CSV_COLUMNS: [&str; 12] = [
    "kind",
    "alpha",
    "m",
    "seed",
    "calib_size",
    "test_size",
    "quantile_index",
    "alpha_prime",
    "threshold_q",
    "coverage",
    "mean_efficiency",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// One row per cell, columns as in [`CELL_CSV_COLUMNS`]. Missing values are
/// empty; infinite thresholds are written as `inf`.
pub fn report_to_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CELL_CSV_COLUMNS)?;
    for c in &report.cells {
        w.write_record([
            c.kind.as_str().to_string(),
            format_float(c.alpha),
            c.m.to_string(),
            c.seed.to_string(),
            c.calib_size.to_string(),
            c.test_size.to_string(),
            c.quantile_index.to_string(),
            format_float(c.alpha_prime),
            format_float(c.threshold_q),
            opt(c.coverage),
            opt(c.mean_efficiency),
            c.error.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub const SUMMARY_CSV_COLUMNS: [&str; 17] = [
    "kind",
    "alpha",
    "m",
    "runs",
    "failed",
    "coverage_mean",
    "coverage_std",
    "coverage_min",
    "coverage_max",
    "threshold_mean",
    "threshold_std",
    "threshold_min",
    "threshold_max",
    "efficiency_mean",
    "efficiency_std",
    "efficiency_min",
    "efficiency_max",
];

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut out = String::new();
    out.push_str(&SUMMARY_CSV_COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        let s = |st: &Option<Stats>, f: fn(&Stats) -> f64| opt(st.as_ref().map(f));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.kind,
            format_float(r.alpha),
            r.m,
            r.runs,
            r.failed,
            s(&r.coverage, |x| x.mean),
            s(&r.coverage, |x| x.std),
            s(&r.coverage, |x| x.min),
            s(&r.coverage, |x| x.max),
            s(&r.threshold_q, |x| x.mean),
            s(&r.threshold_q, |x| x.std),
            s(&r.threshold_q, |x| x.min),
            s(&r.threshold_q, |x| x.max),
            s(&r.efficiency, |x| x.mean),
            s(&r.efficiency, |x| x.std),
            s(&r.efficiency, |x| x.min),
            s(&r.efficiency, |x| x.max),
        );
    }
    Ok(out)
}

/// Cells nested as `kind -> alpha -> m -> seed -> values`.
pub fn report_to_nested_json(report: &Report) -> Result<serde_json::Value> {
    use serde_json::{Map, Value};
    let mut root = Map::new();
    for c in &report.cells {
        let mut values = serde_json::to_value(c)?;
        if let Value::Object(obj) = &mut values {
            for key in ["kind", "alpha", "m", "seed"] {
                obj.remove(key);
            }
        }
        let kind = root
            .entry(c.kind.as_str())
            .or_insert_with(|| Value::Object(Map::new()));
        let alpha = kind
            .as_object_mut()
            .expect("object")
            .entry(format_float(c.alpha))
            .or_insert_with(|| Value::Object(Map::new()));
        let m = alpha
            .as_object_mut()
            .expect("object")
            .entry(c.m.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        m.as_object_mut()
            .expect("object")
            .insert(c.seed.to_string(), values);
    }
    let mut doc = Map::new();
    doc.insert("cells".into(), Value::Object(root));
    if let Some(n) = &report.note {
        doc.insert("note".into(), Value::String(n.clone()));
    }
    Ok(Value::Object(doc))
}
