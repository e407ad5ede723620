//! Measurement service: wire protocol plus transport-independent handlers.
//!
//! Network hosting lives in the `dbh-service` crate; the CLI calls the same
//! handlers directly so both paths share one code path.

mod handler;
pub mod protocol;

pub use handler::{ServiceConfig, ServiceContext, VERSION};
pub use protocol::{
    decode, decode_line, encode, sniff_request_id, ErrorReply, HealthRequest, HealthResponse, MaskPair, MeasureRequest,
    MeasureResponse, Message, ProviderHealth, ProviderSelector, ProviderState, SegmentRequest, SegmentResponse,
    StageTimings, Status, DEFAULT_MAX_PAYLOAD,
};
