//! Versioned documents written by `train` and `calibrate`.

use std::path::Path;

use credal_core::evaluation::split_indices;
use credal_core::io::{read_json, write_json};
use credal_core::predictors::TrainingLog;
use credal_core::{CalibratedPredictor, Error, Model, Result, TrainConfig};
use serde::{Deserialize, Serialize};

pub const MODEL_FILE_FORMAT: &str = "credal-trained-model";
pub const PREDICTOR_FILE_FORMAT: &str = "credal-predictor";
pub const FILE_VERSION: u32 = 1;

/// How a dataset was partitioned, so later steps can recover the same
/// calibration and test rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub rows: usize,
}

impl SplitRecord {
    pub fn indices(&self, rows: usize) -> Result<credal_core::evaluation::Split> {
        if rows != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: rows,
            });
        }
        split_indices(rows, self.fractions, self.seed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub split: SplitRecord,
    pub train_config: TrainConfig<f64>,
    pub training_log: TrainingLog<f64>,
    pub model: Model<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorFile {
    pub format: String,
    pub version: u32,
    /// Absent when calibration used a separate file in full.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRecord>,
    pub predictor: CalibratedPredictor<f64>,
}

fn check_header(path: &Path, format: &str, version: u32, want: &str) -> Result<()> {
    if format != want || version != FILE_VERSION {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("expected {want} version {FILE_VERSION}, found {format} version {version}"),
        });
    }
    Ok(())
}

impl ModelFile {
    pub fn new(split: SplitRecord, train_config: TrainConfig<f64>, training_log: TrainingLog<f64>, model: Model<f64>) -> Self {
        Self {
            format: MODEL_FILE_FORMAT.into(),
            version: FILE_VERSION,
            split,
            train_config,
            training_log,
            model,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_json(path)?;
        check_header(path, &f.format, f.version, MODEL_FILE_FORMAT)?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

impl PredictorFile {
    pub fn new(split: Option<SplitRecord>, predictor: CalibratedPredictor<f64>) -> Self {
        Self {
            format: PREDICTOR_FILE_FORMAT.into(),
            version: FILE_VERSION,
            split,
            predictor,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: Self = read_json(path)?;
        check_header(path, &f.format, f.version, PREDICTOR_FILE_FORMAT)?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}
