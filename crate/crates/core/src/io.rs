//! Dataset, model and report files.
//!
//! Datasets are JSON lines, one example per line:
//!
//! ```text
//! {"features":[0.1,-2.0],"label_dist":[0.2,0.8],"clean_label_dist":[0.25,0.75]}
//! ```
//!
//! `clean_label_dist` is optional. Numbers are written in their shortest
//! round-trip decimal form, so loading a saved file reproduces every value
//! bit for bit. All writes go to a temporary file that is then renamed over
//! the destination.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::predictors::{dataset_dims, LabeledExample};
use crate::scalar::Real;
use crate::simplex::SimplexPoint;

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn dataset_to_jsonl<T: Real>(data: &[LabeledExample<T>]) -> Result<String> {
    let mut out = String::new();
    for ex in data {
        out.push_str(&serde_json::to_string(ex)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses JSON-lines text; blank lines are skipped. `origin` names the
/// source in error messages.
pub fn dataset_from_jsonl<T: Real>(text: &str, origin: &str) -> Result<Vec<LabeledExample<T>>> {
    let mut data = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample<T> = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(first) = data.first() {
            let first: &LabeledExample<T> = first;
            if first.features.len() != ex.features.len() || first.label_dist.k() != ex.label_dist.k() {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    message: "inconsistent feature or class dimension".into(),
                });
            }
        }
        data.push(ex);
    }
    dataset_dims(&data)?;
    Ok(data)
}

pub fn read_dataset<T: Real>(path: &Path) -> Result<Vec<LabeledExample<T>>> {
    let text = read_text(path)?;
    dataset_from_jsonl(&text, &path.display().to_string())
}

pub fn write_dataset<T: Real>(path: &Path, data: &[LabeledExample<T>]) -> Result<()> {
    write_atomic(path, dataset_to_jsonl(data)?.as_bytes())
}

/// Reads a CSV dataset laid out as `D` feature columns followed by `k`
/// label columns. A first row that does not parse as numbers is taken as a
/// header and skipped.
pub fn read_csv_dataset(path: &Path, k: usize) -> Result<Vec<LabeledExample<f64>>> {
    let origin = path.display().to_string();
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: origin,
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        if values.len() <= k {
            return Err(Error::Parse {
                path: origin,
                line: i + 1,
                message: format!("expected more than {k} columns, got {}", values.len()),
            });
        }
        let (features, label) = values.split_at(values.len() - k);
        let label = SimplexPoint::new(label.to_vec()).map_err(|e| Error::Parse {
            path: origin.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        data.push(LabeledExample::new(features.to_vec(), label));
    }
    dataset_dims(&data)?;
    Ok(data)
}
