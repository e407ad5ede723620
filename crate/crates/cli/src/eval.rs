use std::path::{Path, PathBuf};

use clap::Args;
use dbh_core::eval::{apply_predictions, group_by_species, load_manifest, load_predictions, EvaluationRecord, Split};
use dbh_core::pipeline::DistanceMode;
use dbh_core::service::{MeasureRequest, ServiceContext, Status};
use dbh_core::units::Length;
use dbh_core::Error;
use serde_json::json;

use crate::{io_err, CliError, CliResult, Format, ProviderArgs};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV: id,species,gt_dbh_cm,far_path,close_path,displacement_m,far_distance_m,split
    #[arg(long)]
    manifest: PathBuf,
    /// CSV `id,predicted_dbh_cm`; records listed here skip the pipeline.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Only evaluate one split.
    #[arg(long, value_parser = parse_split)]
    split: Option<Split>,
    /// Camera intrinsics, needed when any record is measured.
    #[arg(long)]
    focal_mm: Option<f64>,
    #[arg(long)]
    sensor_w_mm: Option<f64>,
    #[arg(long)]
    sensor_h_mm: Option<f64>,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Drop records whose measurement fails instead of aborting.
    #[arg(long)]
    skip_failures: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

/// Runs the pipeline for one record through the same handler the server uses.
fn measure(
    record: &EvaluationRecord,
    ctx: &ServiceContext,
    args: &EvalArgs,
    intrinsics: [f64; 3],
) -> Result<f64, CliError> {
    let far_image = std::fs::read(&record.far_path).map_err(io_err(&record.far_path))?;
    let close_image = std::fs::read(&record.close_path).map_err(io_err(&record.close_path))?;
    let req = MeasureRequest {
        request_id: record.id.clone(),
        far_image,
        close_image,
        focal_length_mm: intrinsics[0],
        sensor_width_mm: intrinsics[1],
        sensor_height_mm: intrinsics[2],
        displacement_m: record.capture.displacement.in_meters(),
        far_distance_m: match record.capture.distance_mode {
            DistanceMode::Manual { far_distance } => Some(far_distance.in_meters()),
            DistanceMode::Estimated => None,
        },
        provider: args.provider.selector(),
        breast_height_m: None,
    };
    let resp = ctx.handle_measure(&req);
    match (resp.status, resp.dbh_cm) {
        (Status::Ok, Some(dbh)) => Ok(dbh),
        (Status::Error { code, message }, _) => {
            Err(CliError::Status { code, message: format!("{}: {message}", record.id) })
        }
        (Status::Ok, None) => unreachable!("ok responses carry every numeric field"),
    }
}

pub fn run_eval(args: &EvalArgs) -> CliResult {
    let manifest = load_manifest(&args.manifest).map_err(|e| match e {
        Error::Io(m) => CliError::Io(format!("{}: {m}", args.manifest.display())),
        other => CliError::Pipeline(other),
    })?;
    for r in &manifest.rejected {
        eprintln!("warning: manifest line {} ({}): {}", r.line, r.id.as_deref().unwrap_or("-"), r.reason);
    }
    let split_counts = manifest.split_counts();
    let mut records: Vec<EvaluationRecord> =
        manifest.records.into_iter().filter(|r| args.split.map_or(true, |s| r.split == s)).collect();
    if let Some(path) = &args.predictions {
        apply_predictions(&mut records, &load_predictions(&read_text(path)?)?);
    }

    let pending = records.iter().filter(|r| r.predicted_dbh.is_none()).count();
    let mut failures = Vec::new();
    if pending > 0 {
        let intrinsics = match (args.focal_mm, args.sensor_w_mm, args.sensor_h_mm) {
            (Some(f), Some(w), Some(h)) => [f, w, h],
            _ => {
                return Err(CliError::Usage(format!(
                    "{pending} record(s) have no prediction; measuring them needs --focal-mm, --sensor-w-mm and --sensor-h-mm"
                )))
            }
        };
        let ctx = ServiceContext::new(&args.provider.service_config());
        for record in records.iter_mut().filter(|r| r.predicted_dbh.is_none()) {
            match measure(record, &ctx, args, intrinsics) {
                Ok(dbh) => record.predicted_dbh = Some(Length::centimeters(dbh)),
                Err(e) if args.skip_failures => {
                    eprintln!("warning: skipping {e}");
                    failures.push(record.id.clone());
                }
                Err(e) => return Err(e),
            }
        }
        records.retain(|r| r.predicted_dbh.is_some());
    }

    let table = group_by_species(&records)?;
    match args.format {
        Format::Text => {
            print!("{}", table.render_text());
            println!(
                "records: {} (train {}, validation {}, test {}, unsplit {})",
                records.len(),
                split_counts.train,
                split_counts.validation,
                split_counts.test,
                split_counts.unsplit
            );
            println!("reBias is mean((truth - predicted) / truth): negative means predictions exceed truth.");
        }
        Format::Json => {
            let mut v = table.to_json();
            v["records"] = records.len().into();
            v["split_counts"] = json!(split_counts);
            v["rejected"] = json!(manifest.rejected);
            v["skipped"] = json!(failures);
            println!("{v}");
        }
    }
    Ok(())
}
