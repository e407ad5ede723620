use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use dbh_core::service::{MeasureRequest, MeasureResponse, SegmentRequest, ServiceContext, Status};

use crate::{io_err, CliError, CliResult, Format, ProviderArgs};

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Image taken from the far position.
    #[arg(long)]
    far: PathBuf,
    /// Image taken after walking toward the trunk.
    #[arg(long)]
    close: PathBuf,
    #[arg(long)]
    focal_mm: f64,
    #[arg(long)]
    sensor_w_mm: f64,
    #[arg(long)]
    sensor_h_mm: f64,
    /// Distance walked between the two captures.
    #[arg(long)]
    displacement_m: f64,
    /// Measured camera-to-trunk distance at the far position; omit to estimate it.
    #[arg(long)]
    far_distance_m: Option<f64>,
    /// Defaults to 4.5 ft.
    #[arg(long)]
    breast_height_m: Option<f64>,
    #[command(flatten)]
    provider: ProviderArgs,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, default_value = "cli")]
    request_id: String,
    /// Write the selected far/close trunk masks here.
    #[arg(long)]
    masks_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    image: PathBuf,
    /// Output PNG for the trunk mask.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pub(crate) provider: ProviderArgs,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(io_err(path))
}

pub fn build_request(args: &MeasureArgs) -> Result<MeasureRequest, CliError> {
    Ok(MeasureRequest {
        request_id: args.request_id.clone(),
        far_image: read(&args.far)?,
        close_image: read(&args.close)?,
        focal_length_mm: args.focal_mm,
        sensor_width_mm: args.sensor_w_mm,
        sensor_height_mm: args.sensor_h_mm,
        displacement_m: args.displacement_m,
        far_distance_m: args.far_distance_m,
        provider: args.provider.selector(),
        breast_height_m: args.breast_height_m,
    })
}

fn status_error(status: &Status) -> Option<CliError> {
    match status {
        Status::Ok => None,
        Status::Error { code, message } => Some(CliError::Status { code: code.clone(), message: message.clone() }),
    }
}

/// The response as printed by `--format json`: everything but the mask payloads.
pub fn response_json(resp: &MeasureResponse) -> serde_json::Value {
    let mut v = serde_json::to_value(resp).expect("protocol types serialize infallibly");
    if let Some(map) = v.as_object_mut() {
        map.remove("masks");
    }
    v
}

fn render_text(resp: &MeasureResponse) -> String {
    let mut out = String::new();
    let mut row = |k: &str, v: String| {
        let _ = writeln!(out, "{k:<16}{v}");
    };
    if let Some(v) = resp.dbh_cm {
        row("dbh_cm", format!("{v:.2}"));
    }
    if let Some(v) = resp.far_distance_m {
        row("far_distance_m", format!("{v:.4}"));
    }
    if let Some(m) = &resp.distance_mode {
        row("distance_mode", m.clone());
    }
    if let Some(v) = resp.df_mm_per_px {
        row("df_mm_per_px", format!("{v:.5}"));
    }
    if let Some(v) = resp.p_pixels {
        row("p_pixels", v.to_string());
    }
    if let Some(v) = resp.breast_row {
        row("breast_row", v.to_string());
    }
    if let (Some(f), Some(c)) = (resp.h_far_px, resp.h_close_px) {
        row("h_far_px", f.to_string());
        row("h_close_px", c.to_string());
    }
    if let Some(v) = resp.alignment_iou {
        row("alignment_iou", format!("{v:.4}"));
    }
    if let Some(t) = &resp.timings {
        row("total_ms", format!("{:.1}", t.total_ms));
    }
    out
}

pub fn run_measure(args: &MeasureArgs) -> CliResult {
    let req = build_request(args)?;
    let ctx = ServiceContext::new(&args.provider.service_config());
    let resp = ctx.handle_measure(&req);
    if args.format == Format::Json {
        println!("{}", response_json(&resp));
    }
    if let Some(e) = status_error(&resp.status) {
        return Err(e);
    }
    if let (Some(dir), Some(masks)) = (&args.masks_out, &resp.masks) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, png) in [("far.mask.png", &masks.far_png), ("close.mask.png", &masks.close_png)] {
            let path = dir.join(name);
            std::fs::write(&path, png).map_err(io_err(&path))?;
        }
    }
    if args.format == Format::Text {
        print!("{}", render_text(&resp));
    }
    Ok(())
}

pub fn run_segment(args: &SegmentArgs) -> CliResult {
    let image = read(&args.image)?;
    let ctx = ServiceContext::new(&args.provider.service_config());
    let resp = ctx.handle_segment(&SegmentRequest { request_id: "cli".into(), image, provider: None });
    if let Some(e) = status_error(&resp.status) {
        return Err(e);
    }
    let png = resp
        .mask_png
        .ok_or_else(|| CliError::Status { code: "PROTOCOL".into(), message: "segment reply carried no mask".into() })?;
    std::fs::write(&args.out, png).map_err(io_err(&args.out))?;
    println!("{}", args.out.display());
    Ok(())
}
