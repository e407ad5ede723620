//! DBH error statistics.
//!
//! With truth `y`, prediction `ŷ` and signed error `e = ŷ - y`:
//!
//! | metric | definition |
//! |---|---|
//! | RMSE | `sqrt(mean((y - ŷ)^2))` |
//! | MAE | `mean(abs(y - ŷ))` |
//! | reBias | `100 * mean((y - ŷ) / y)` |
//! | reRMSE | `100 * sqrt(mean(((y - ŷ) / y)^2))` |
//! | Std. Dev. | `sqrt(mean((e - mean(e))^2))` (population form) |
//! | Min / Max | extremes of `e` |
//!
//! Note the reBias sign: it is negative when predictions exceed the truth.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvaluationRecord;
use crate::error::{Error, Result};
use crate::units::Unit;

/// Label of the pooled row in species tables.
pub const AVERAGE_ROW: &str = "Average";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub rmse_cm: f64,
    pub mae_cm: f64,
    pub rebias_pct: f64,
    pub rermse_pct: f64,
    pub min_error_cm: f64,
    pub max_error_cm: f64,
    pub std_dev_cm: f64,
}

/// Statistics over `(id, truth_cm, predicted_cm)` triples. Sums run in id
/// order so the result does not depend on input order.
pub fn metrics_from_pairs(pairs: &[(&str, f64, f64)]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut sorted: Vec<&(&str, f64, f64)> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    for (id, y, _) in &sorted {
        if !(*y > 0.0) {
            return Err(Error::Parameter(format!("record `{id}`: ground-truth DBH must be positive, got {y}")));
        }
    }
    let n = sorted.len() as f64;
    let (mut sq, mut abs, mut rel, mut rel_sq, mut sum_e) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut min_e, mut max_e) = (f64::INFINITY, f64::NEG_INFINITY);
    for &&(_, y, yhat) in &sorted {
        let diff = y - yhat;
        let e = yhat - y;
        sq += diff * diff;
        abs += diff.abs();
        rel += diff / y;
        rel_sq += (diff / y) * (diff / y);
        sum_e += e;
        min_e = min_e.min(e);
        max_e = max_e.max(e);
    }
    let mean_e = sum_e / n;
    let var: f64 = sorted.iter().map(|&&(_, y, yhat)| (yhat - y - mean_e).powi(2)).sum::<f64>() / n;
    Ok(MetricsReport {
        n: sorted.len(),
        rmse_cm: (sq / n).sqrt(),
        mae_cm: abs / n,
        rebias_pct: 100.0 * rel / n,
        rermse_pct: 100.0 * (rel_sq / n).sqrt(),
        min_error_cm: min_e,
        max_error_cm: max_e,
        std_dev_cm: var.sqrt(),
    })
}

fn pairs<'a>(records: &[&'a EvaluationRecord]) -> Result<Vec<(&'a str, f64, f64)>> {
    let missing: Vec<String> = records.iter().filter(|r| r.predicted_dbh.is_none()).map(|r| r.id.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRecords(missing));
    }
    Ok(records
        .iter()
        .map(|r| {
            (
                r.id.as_str(),
                r.gt_dbh.in_unit(Unit::Centimeter),
                r.predicted_dbh.expect("checked above").in_unit(Unit::Centimeter),
            )
        })
        .collect())
}

pub fn dbh_metrics(records: &[EvaluationRecord]) -> Result<MetricsReport> {
    let refs: Vec<&EvaluationRecord> = records.iter().collect();
    metrics_from_pairs(&pairs(&refs)?)
}

/// Per-species reports plus a pooled row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesTable {
    pub species: Vec<(String, MetricsReport)>,
    /// Computed over all records together, not averaged across species.
    pub average: MetricsReport,
}

pub fn group_by_species(records: &[EvaluationRecord]) -> Result<SpeciesTable> {
    let average = dbh_metrics(records)?;
    let mut names: Vec<&str> = records.iter().map(|r| r.species.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let species = names
        .into_iter()
        .map(|name| {
            let group: Vec<&EvaluationRecord> = records.iter().filter(|r| r.species == name).collect();
            Ok((name.to_owned(), metrics_from_pairs(&pairs(&group)?)?))
        })
        .collect::<Result<_>>()?;
    Ok(SpeciesTable { species, average })
}

const HEADERS: [&str; 8] = [
    "Tree Species",
    "RMSE (cm)",
    "MAE (cm)",
    "reBias (%)",
    "reRMSE (%)",
    "Min Error (cm)",
    "Max Error (cm)",
    "Std. Dev. (cm)",
];

impl MetricsReport {
    /// Table cells: centimeters to one decimal, percentages to two.
    pub fn cells(&self) -> [String; 7] {
        [
            format!("{:.1}", self.rmse_cm),
            format!("{:.1}", self.mae_cm),
            format!("{:.2}", self.rebias_pct),
            format!("{:.2}", self.rermse_pct),
            format!("{:.1}", self.min_error_cm),
            format!("{:.1}", self.max_error_cm),
            format!("{:.1}", self.std_dev_cm),
        ]
    }
}

impl SpeciesTable {
    /// Aligned plain-text table, one row per species then the pooled row.
    pub fn render_text(&self) -> String {
        let rows: Vec<(&str, [String; 7])> = self
            .species
            .iter()
            .map(|(name, m)| (name.as_str(), m.cells()))
            .chain(std::iter::once((AVERAGE_ROW, self.average.cells())))
            .collect();
        let name_w = rows.iter().map(|(n, _)| n.chars().count()).chain([HEADERS[0].len()]).max().unwrap_or(0);
        let mut widths = [0usize; 7];
        for (i, w) in widths.iter_mut().enumerate() {
            *w = rows.iter().map(|(_, c)| c[i].len()).chain([HEADERS[i + 1].len()]).max().unwrap_or(0);
        }

        let mut out = String::new();
        let mut line = format!("{:<name_w$}", HEADERS[0]);
        for (h, w) in HEADERS[1..].iter().zip(widths) {
            let _ = write!(line, "  {h:>w$}");
        }
        let rule = "-".repeat(line.len());
        out.push_str(&line);
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
        for (i, (name, cells)) in rows.iter().enumerate() {
            if i + 1 == rows.len() {
                out.push_str(&rule);
                out.push('\n');
            }
            let mut line = format!("{name:<name_w$}");
            for (c, w) in cells.iter().zip(widths) {
                let _ = write!(line, "  {c:>w$}");
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let species: Vec<serde_json::Value> = self
            .species
            .iter()
            .map(|(name, m)| {
                let mut v = serde_json::to_value(m).expect("plain struct");
                v["species"] = name.clone().into();
                v
            })
            .collect();
        serde_json::json!({ "species": species, "average": self.average })
    }
}
