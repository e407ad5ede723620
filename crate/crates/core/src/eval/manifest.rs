//! Dataset manifests: one CSV row per far/close capture pair.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{CaptureConfig, DistanceMode};
use crate::units::Length;

pub const MANIFEST_COLUMNS: [&str; 8] =
    ["id", "species", "gt_dbh_cm", "far_path", "close_path", "displacement_m", "far_distance_m", "split"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    Unsplit,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            "unsplit" | "" => Ok(Split::Unsplit),
            other => Err(Error::Parameter(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub id: String,
    pub species: String,
    pub gt_dbh: Length,
    pub predicted_dbh: Option<Length>,
    pub split: Split,
    pub far_path: PathBuf,
    pub close_path: PathBuf,
    pub capture: CaptureConfig,
}

/// A row that failed validation; `line` is 1-based and counts the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub unsplit: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub records: Vec<EvaluationRecord>,
    pub rejected: Vec<RejectedRow>,
}

impl Manifest {
    pub fn split_counts(&self) -> SplitCounts {
        let mut counts = SplitCounts::default();
        for r in &self.records {
            match r.split {
                Split::Train => counts.train += 1,
                Split::Validation => counts.validation += 1,
                Split::Test => counts.test += 1,
                Split::Unsplit => counts.unsplit += 1,
            }
        }
        counts
    }
}

fn parse_positive(field: &str, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = field.trim().parse().map_err(|_| format!("{name}: `{field}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} must be positive, got {v}"))
    }
}

fn parse_row(fields: &[&str], base_dir: &Path) -> std::result::Result<EvaluationRecord, String> {
    let [id, species, gt, far, close, disp, dist, split] = fields else {
        unreachable!("row is projected onto the manifest columns");
    };
    if id.is_empty() {
        return Err("id is empty".into());
    }
    let gt_dbh = Length::centimeters(parse_positive(gt, "gt_dbh_cm")?);
    let displacement = Length::meters(parse_positive(disp, "displacement_m")?);
    let distance_mode = if dist.trim().is_empty() {
        DistanceMode::Estimated
    } else {
        DistanceMode::Manual { far_distance: Length::meters(parse_positive(dist, "far_distance_m")?) }
    };
    let split: Split = split.trim().parse().map_err(|e: Error| e.to_string())?;
    let capture = CaptureConfig { displacement, distance_mode, ..CaptureConfig::default() };
    capture.validate().map_err(|e| e.to_string())?;
    Ok(EvaluationRecord {
        id: id.to_string(),
        species: species.to_string(),
        gt_dbh,
        predicted_dbh: None,
        split,
        far_path: base_dir.join(far),
        close_path: base_dir.join(close),
        capture,
    })
}

/// Parses manifest text; relative image paths resolve against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::ManifestSchema(e.to_string()))?.clone();
    let mut index = [0usize; 8];
    for (slot, column) in index.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == column)
            .ok_or_else(|| Error::ManifestSchema(format!("missing required column `{column}`")))?;
    }
    let mut manifest = Manifest::default();
    let mut seen = std::collections::HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                manifest.rejected.push(RejectedRow { line, id: None, reason: e.to_string() });
                continue;
            }
        };
        let fields: Vec<&str> = index.iter().map(|&k| row.get(k).unwrap_or("")).collect();
        let id = Some(fields[0].to_owned()).filter(|s| !s.is_empty());
        match parse_row(&fields, base_dir) {
            Ok(record) if !seen.insert(record.id.clone()) => {
                manifest.rejected.push(RejectedRow { line, id, reason: "duplicate id".into() })
            }
            Ok(record) => manifest.records.push(record),
            Err(reason) => manifest.rejected.push(RejectedRow { line, id, reason }),
        }
    }
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// `id,predicted_dbh_cm` rows.
pub fn load_predictions(text: &str) -> Result<HashMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::ManifestSchema(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::ManifestSchema(format!("predictions: missing required column `{name}`")))
    };
    let (id_col, pred_col) = (col("id")?, col("predicted_dbh_cm")?);
    let mut out = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::ManifestSchema(format!("predictions line {}: {e}", i + 2)))?;
        let id = row.get(id_col).unwrap_or("").to_owned();
        let value = row
            .get(pred_col)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|_| Error::ManifestSchema(format!("predictions line {}: bad predicted_dbh_cm", i + 2)))?;
        out.insert(id, value);
    }
    Ok(out)
}

/// Attaches predictions by id; records without one stay unpredicted.
pub fn apply_predictions(records: &mut [EvaluationRecord], predictions: &HashMap<String, f64>) {
    for r in records {
        if let Some(&p) = predictions.get(&r.id) {
            r.predicted_dbh = Some(Length::centimeters(p));
        }
    }
}
