//! Newline-delimited JSON envelopes.
//!
//! Every frame is one compact JSON object `{"type": ..., "payload": ...}`
//! followed by `\n`. Binary fields travel as standard base64 strings.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ErrorCode, Result};

/// Largest accepted frame, in bytes.
pub const DEFAULT_MAX_PAYLOAD: usize = 32 * 1024 * 1024;

pub mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        STANDARD.decode(text.as_bytes()).map_err(serde::de::Error::custom)
    }
}

/// Which mask provider a request wants. `mask` means the payloads already
/// are trunk masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSelector {
    #[default]
    Mask,
    Oracle,
    Baseline {
        #[serde(default)]
        invert: bool,
        #[serde(default = "default_open_iterations")]
        open_iterations: u32,
    },
    External,
}

fn default_open_iterations() -> u32 {
    1
}

impl ProviderSelector {
    pub fn name(&self) -> &'static str {
        match self {
            ProviderSelector::Mask => "mask",
            ProviderSelector::Oracle => "oracle",
            ProviderSelector::Baseline { .. } => "baseline",
            ProviderSelector::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRequest {
    pub request_id: String,
    #[serde(with = "base64_bytes")]
    pub far_image: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub close_image: Vec<u8>,
    pub focal_length_mm: f64,
    pub sensor_width_mm: f64,
    pub sensor_height_mm: f64,
    pub displacement_m: f64,
    /// Absent: estimate the distance from the pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_distance_m: Option<f64>,
    #[serde(default)]
    pub provider: ProviderSelector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breast_height_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error { code: String, message: String },
}

impl Status {
    pub fn from_error(e: &Error) -> Self {
        Status::Error { code: e.code().as_str().to_owned(), message: e.to_string() }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Status::Ok)
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        match self {
            Status::Ok => None,
            Status::Error { code, .. } => ErrorCode::parse(code),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPair {
    #[serde(with = "base64_bytes")]
    pub far_png: Vec<u8>,
    #[serde(with = "base64_bytes")]
    pub close_png: Vec<u8>,
}

/// Server-side wall time per stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub segment_ms: f64,
    pub measure_ms: f64,
    pub encode_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureResponse {
    pub request_id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dbh_cm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_distance_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df_mm_per_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_pixels: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breast_row: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_far_px: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_close_px: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<MaskPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl MeasureResponse {
    pub fn error(request_id: impl Into<String>, e: &Error) -> Self {
        Self {
            request_id: request_id.into(),
            status: Status::from_error(e),
            dbh_cm: None,
            far_distance_m: None,
            df_mm_per_px: None,
            p_pixels: None,
            breast_row: None,
            h_far_px: None,
            h_close_px: None,
            alignment_iou: None,
            distance_mode: None,
            masks: None,
            timings: None,
        }
    }
}

/// Mask-only exchange used by the external provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub request_id: String,
    #[serde(with = "base64_bytes")]
    pub image: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderSelector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub request_id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_base64")]
    pub mask_png: Option<Vec<u8>>,
}

mod opt_base64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "super::base64_bytes")] Vec<u8>);

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|b| Wrapped(b.clone())).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Ok(Option::<Wrapped>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HealthRequest {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderState {
    Available,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderHealth {
    pub name: String,
    pub state: ProviderState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
    pub providers: Vec<ProviderHealth>,
}

/// Reply to a frame that could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    pub code: String,
    pub message: String,
}

impl ErrorReply {
    pub fn from_error(request_id: Option<String>, e: &Error) -> Self {
        Self { request_id, code: e.code().as_str().to_owned(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    MeasureRequest(MeasureRequest),
    MeasureResponse(MeasureResponse),
    SegmentRequest(SegmentRequest),
    SegmentResponse(SegmentResponse),
    HealthRequest(HealthRequest),
    HealthResponse(HealthResponse),
    Error(ErrorReply),
}

impl Message {
    pub const TYPES: [&'static str; 7] = [
        "measure_request",
        "measure_response",
        "segment_request",
        "segment_response",
        "health_request",
        "health_response",
        "error",
    ];

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::MeasureRequest(_) => "measure_request",
            Message::MeasureResponse(_) => "measure_response",
            Message::SegmentRequest(_) => "segment_request",
            Message::SegmentResponse(_) => "segment_response",
            Message::HealthRequest(_) => "health_request",
            Message::HealthResponse(_) => "health_response",
            Message::Error(_) => "error",
        }
    }

    fn payload(&self) -> serde_json::Result<Value> {
        match self {
            Message::MeasureRequest(m) => serde_json::to_value(m),
            Message::MeasureResponse(m) => serde_json::to_value(m),
            Message::SegmentRequest(m) => serde_json::to_value(m),
            Message::SegmentResponse(m) => serde_json::to_value(m),
            Message::HealthRequest(m) => serde_json::to_value(m),
            Message::HealthResponse(m) => serde_json::to_value(m),
            Message::Error(m) => serde_json::to_value(m),
        }
    }
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    #[serde(rename = "type")]
    kind: &'a str,
    payload: Value,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    payload: Value,
}

/// One frame, newline included.
pub fn encode(message: &Message) -> Vec<u8> {
    let payload = message.payload().expect("protocol messages serialize infallibly");
    let mut out = serde_json::to_vec(&EnvelopeOut { kind: message.type_name(), payload })
        .expect("protocol messages serialize infallibly");
    out.push(b'\n');
    out
}

fn payload_of<T: serde::de::DeserializeOwned>(kind: &str, payload: Value) -> Result<T> {
    serde_json::from_value(payload).map_err(|e| Error::Protocol(format!("{kind}: {e}")))
}

/// Decodes exactly one newline-terminated frame.
pub fn decode(frame: &[u8]) -> Result<Message> {
    let body = match frame.split_last() {
        Some((b'\n', body)) => body,
        _ => return Err(Error::Frame("frame is not newline-terminated".into())),
    };
    let body = body.strip_suffix(b"\r").unwrap_or(body);
    if body.contains(&b'\n') {
        return Err(Error::Frame("more than one frame".into()));
    }
    decode_line(body)
}

/// Decodes a frame whose terminating newline has already been stripped.
pub fn decode_line(body: &[u8]) -> Result<Message> {
    let env: EnvelopeIn = serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Eof => Error::Frame(format!("truncated frame: {e}")),
        _ => Error::Protocol(format!("malformed envelope: {e}")),
    })?;
    let kind = env.kind.as_str();
    Ok(match kind {
        "measure_request" => Message::MeasureRequest(payload_of(kind, env.payload)?),
        "measure_response" => Message::MeasureResponse(payload_of(kind, env.payload)?),
        "segment_request" => Message::SegmentRequest(payload_of(kind, env.payload)?),
        "segment_response" => Message::SegmentResponse(payload_of(kind, env.payload)?),
        "health_request" => Message::HealthRequest(if env.payload.is_null() {
            HealthRequest {}
        } else {
            payload_of(kind, env.payload)?
        }),
        "health_response" => Message::HealthResponse(payload_of(kind, env.payload)?),
        "error" => Message::Error(payload_of(kind, env.payload)?),
        other => return Err(Error::UnsupportedType(other.to_owned())),
    })
}

/// Best-effort `request_id` from a frame that failed to decode.
pub fn sniff_request_id(body: &[u8]) -> Option<String> {
    let v: Value = serde_json::from_slice(body).ok()?;
    v.get("payload")?.get("request_id")?.as_str().map(str::to_owned)
}
