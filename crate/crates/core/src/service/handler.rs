use std::path::PathBuf;
use std::time::Instant;

use super::protocol::{
    self, ErrorReply, HealthResponse, MaskPair, MeasureRequest, MeasureResponse, Message, ProviderHealth,
    ProviderSelector, ProviderState, SegmentRequest, SegmentResponse, StageTimings, Status,
};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::mask::{select_trunk_component, TrunkMask};
use crate::pipeline::{measure_pair, CaptureConfig, DistanceMode, Measurement};
use crate::providers::{segment, BaselineParams, ExternalEndpoint, MaskProviderKind, OracleStore};
use crate::units::{Length, BREAST_HEIGHT};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Startup configuration for the providers a service instance offers.
#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub oracle_dir: Option<PathBuf>,
    pub external: Option<ExternalEndpoint>,
    /// Provider used for `segment_request`s that do not name one.
    pub segment_default: ProviderSelector,
}

/// Read-only provider state shared by all requests.
#[derive(Debug, Clone)]
pub struct ServiceContext {
    oracle: Option<std::result::Result<OracleStore, String>>,
    external: Option<ExternalEndpoint>,
    segment_default: ProviderSelector,
}

impl Default for ServiceContext {
    fn default() -> Self {
        Self::new(&ServiceConfig::default())
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl ServiceContext {
    /// A misconfigured oracle does not prevent startup; it is reported as
    /// unavailable and requests naming it fail.
    pub fn new(config: &ServiceConfig) -> Self {
        let oracle = config.oracle_dir.as_ref().map(|dir| OracleStore::open(dir).map_err(|e| e.to_string()));
        if let Some(Err(e)) = &oracle {
            log::warn!("oracle provider unavailable: {e}");
        }
        Self { oracle, external: config.external.clone(), segment_default: config.segment_default }
    }

    pub fn resolve(&self, selector: ProviderSelector) -> Result<MaskProviderKind> {
        match selector {
            ProviderSelector::Mask => Ok(MaskProviderKind::Precomputed),
            ProviderSelector::Baseline { invert, open_iterations } => {
                let params = BaselineParams { invert, open_iterations };
                params.validate()?;
                Ok(MaskProviderKind::Baseline(params))
            }
            ProviderSelector::Oracle => match &self.oracle {
                Some(Ok(store)) => Ok(MaskProviderKind::Oracle(store.clone())),
                Some(Err(e)) => Err(Error::ProviderUnavailable(format!("oracle: {e}"))),
                None => Err(Error::ProviderUnavailable("oracle: no oracle directory configured".into())),
            },
            ProviderSelector::External => match &self.external {
                Some(endpoint) => Ok(MaskProviderKind::External(endpoint.clone())),
                None => Err(Error::ProviderUnavailable("external: no endpoint configured".into())),
            },
        }
    }

    pub fn handle_health(&self) -> HealthResponse {
        let available =
            |name: &str| ProviderHealth { name: name.into(), state: ProviderState::Available, detail: None };
        let unavailable = |name: &str, detail: String| ProviderHealth {
            name: name.into(),
            state: ProviderState::Unavailable,
            detail: Some(detail),
        };
        let mut providers = vec![available("mask"), available("baseline")];
        providers.push(match &self.oracle {
            Some(Ok(store)) => {
                ProviderHealth { detail: Some(format!("{} entries", store.len())), ..available("oracle") }
            }
            Some(Err(e)) => unavailable("oracle", e.clone()),
            None => unavailable("oracle", "not configured".into()),
        });
        // Reported from configuration only; probing would make health non-constant-time.
        providers.push(match &self.external {
            Some(endpoint) => ProviderHealth { detail: Some(endpoint.address.clone()), ..available("external") },
            None => unavailable("external", "not configured".into()),
        });
        HealthResponse { status: "ok".into(), version: VERSION.into(), providers }
    }

    fn validate(req: &MeasureRequest) -> Result<(CaptureConfig, [f64; 3])> {
        if req.far_image.is_empty() || req.close_image.is_empty() {
            return Err(Error::Protocol("image payloads must be non-empty".into()));
        }
        let focal = Error::positive("focal_length_mm", req.focal_length_mm)?;
        let sw = Error::positive("sensor_width_mm", req.sensor_width_mm)?;
        let sh = Error::positive("sensor_height_mm", req.sensor_height_mm)?;
        let displacement = Length::meters(Error::positive("displacement_m", req.displacement_m)?);
        let distance_mode = match req.far_distance_m {
            Some(x) => DistanceMode::Manual { far_distance: Length::meters(Error::positive("far_distance_m", x)?) },
            None => DistanceMode::Estimated,
        };
        let breast_height = match req.breast_height_m {
            Some(b) => Length::meters(Error::positive("breast_height_m", b)?),
            None => BREAST_HEIGHT,
        };
        let cfg = CaptureConfig { displacement, distance_mode, breast_height, ..CaptureConfig::default() };
        cfg.validate()?;
        Ok((cfg, [focal, sw, sh]))
    }

    fn segment_one(&self, image: &[u8], provider: &MaskProviderKind) -> Result<TrunkMask> {
        let raw = segment(image, provider)?;
        if raw.is_empty() {
            return Err(Error::EmptyMask("provider returned an empty mask"));
        }
        select_trunk_component(&raw)
    }

    fn run_measure(&self, req: &MeasureRequest, timings: &mut StageTimings) -> Result<(Measurement, MaskPair)> {
        let (cfg, [focal, sw, sh]) = Self::validate(req)?;
        let provider = self.resolve(req.provider)?;

        let t = Instant::now();
        let far = self.segment_one(&req.far_image, &provider)?;
        let close = self.segment_one(&req.close_image, &provider)?;
        if far.dimensions() != close.dimensions() {
            return Err(Error::Shape { left: far.dimensions(), right: close.dimensions() });
        }
        timings.segment_ms = ms(t);

        let t = Instant::now();
        let cam = CameraIntrinsics::from_mm(focal, sw, sh, far.width(), far.height())?;
        let measurement = measure_pair(&far, &close, &cam, &cfg)?;
        timings.measure_ms = ms(t);

        let t = Instant::now();
        let masks = MaskPair { far_png: far.to_png()?, close_png: close.to_png()? };
        timings.encode_ms = ms(t);
        Ok((measurement, masks))
    }

    /// Segments both payloads and runs the estimation pipeline.
    pub fn handle_measure(&self, req: &MeasureRequest) -> MeasureResponse {
        let start = Instant::now();
        let mut timings = StageTimings::default();
        match self.run_measure(req, &mut timings) {
            Ok((m, masks)) => {
                timings.total_ms = ms(start);
                MeasureResponse {
                    request_id: req.request_id.clone(),
                    status: Status::Ok,
                    dbh_cm: Some(m.dbh_cm()),
                    far_distance_m: Some(m.far_distance_m()),
                    df_mm_per_px: Some(m.df.mm_per_px()),
                    p_pixels: Some(m.p_pixels),
                    breast_row: Some(m.breast_row),
                    h_far_px: Some(m.h_far_px),
                    h_close_px: Some(m.h_close_px),
                    alignment_iou: Some(m.alignment_iou),
                    distance_mode: Some(m.mode.name().into()),
                    masks: Some(masks),
                    timings: Some(timings),
                }
            }
            Err(e) => MeasureResponse::error(req.request_id.clone(), &e),
        }
    }

    pub fn handle_segment(&self, req: &SegmentRequest) -> SegmentResponse {
        let selector = req.provider.unwrap_or(self.segment_default);
        let result = self.resolve(selector).and_then(|p| self.segment_one(&req.image, &p)).and_then(|m| m.to_png());
        match result {
            Ok(png) => SegmentResponse { request_id: req.request_id.clone(), status: Status::Ok, mask_png: Some(png) },
            Err(e) => {
                SegmentResponse { request_id: req.request_id.clone(), status: Status::from_error(&e), mask_png: None }
            }
        }
    }

    /// Dispatches one decoded message; responses are never answered.
    pub fn handle_message(&self, message: &Message) -> Message {
        match message {
            Message::MeasureRequest(req) => Message::MeasureResponse(self.handle_measure(req)),
            Message::SegmentRequest(req) => Message::SegmentResponse(self.handle_segment(req)),
            Message::HealthRequest(_) => Message::HealthResponse(self.handle_health()),
            other => Message::Error(ErrorReply::from_error(
                None,
                &Error::Protocol(format!("`{}` is not a request", other.type_name())),
            )),
        }
    }

    /// Full frame-in, frame-out handling for stream transports. `line` has
    /// its newline stripped.
    pub fn handle_line(&self, line: &[u8]) -> Vec<u8> {
        let reply = match protocol::decode_line(line) {
            Ok(message) => self.handle_message(&message),
            Err(e) => Message::Error(ErrorReply::from_error(protocol::sniff_request_id(line), &e)),
        };
        protocol::encode(&reply)
    }
}
