use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the measurement stack can produce.
///
/// Each variant maps to exactly one stable [`ErrorCode`], which is what the
/// wire protocol and the CLI report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{param}` must be strictly positive, got {value}")]
    Domain { param: &'static str, value: f64 },

    #[error("mask is empty: {0}")]
    EmptyMask(&'static str),

    #[error("non-approaching capture: close height {h_close} px must exceed far height {h_far} px")]
    NonApproaching { h_far: u32, h_close: u32 },

    #[error("inconsistent mask: extent {extent_px} px exceeds image extent {image_extent_px} px")]
    InconsistentMask { extent_px: u32, image_extent_px: u32 },

    #[error("alignment failed: best IoU {iou:.3} is below 0.5")]
    AlignFailure { iou: f64 },

    #[error("far and close trunks share no rows after alignment")]
    NoOverlap,

    #[error("row {row} lies outside the trunk span [{top_row}, {base_row}]")]
    OutOfTrunk { row: i64, top_row: u32, base_row: u32 },

    #[error("trunk too short: breast height needs row {breast_row} but trunk top is row {top_row}")]
    TrunkTooShort { breast_row: i64, top_row: u32 },

    #[error("unknown image: {0}")]
    UnknownImage(String),

    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("segmentation produced no foreground")]
    SegmentationEmpty,

    #[error("image format error: {0}")]
    Format(String),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    Shape { left: (u32, u32), right: (u32, u32) },

    #[error("trunk does not fit the frame: {reason} (max radius {max_radius_m:.4} m, max camera height {max_camera_height_m:.4} m)")]
    Framing { reason: &'static str, max_radius_m: f64, max_camera_height_m: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("nothing to evaluate")]
    EmptyEvaluation,

    #[error("records without predictions: {}", .0.join(", "))]
    IncompleteRecords(Vec<String>),

    #[error("manifest schema: {0}")]
    ManifestSchema(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("frame error: {0}")]
    Frame(String),

    #[error("unsupported message type `{0}`")]
    UnsupportedType(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Stable machine-readable error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    InvalidInput,
    EmptyMask,
    NonApproaching,
    InconsistentMask,
    AlignFail,
    NoOverlap,
    OutOfTrunk,
    TrunkTooShort,
    UnknownImage,
    ProviderUnavailable,
    SegmentationEmpty,
    ImageFormat,
    ShapeMismatch,
    Framing,
    EmptyEvaluation,
    IncompleteRecords,
    ManifestSchema,
    Protocol,
    Frame,
    UnsupportedType,
    Io,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 21] = [
        ErrorCode::InvalidInput,
        ErrorCode::EmptyMask,
        ErrorCode::NonApproaching,
        ErrorCode::InconsistentMask,
        ErrorCode::AlignFail,
        ErrorCode::NoOverlap,
        ErrorCode::OutOfTrunk,
        ErrorCode::TrunkTooShort,
        ErrorCode::UnknownImage,
        ErrorCode::ProviderUnavailable,
        ErrorCode::SegmentationEmpty,
        ErrorCode::ImageFormat,
        ErrorCode::ShapeMismatch,
        ErrorCode::Framing,
        ErrorCode::EmptyEvaluation,
        ErrorCode::IncompleteRecords,
        ErrorCode::ManifestSchema,
        ErrorCode::Protocol,
        ErrorCode::Frame,
        ErrorCode::UnsupportedType,
        ErrorCode::Io,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::InvalidInput => "INVALID_INPUT",
            ErrorCode::EmptyMask => "EMPTY_MASK",
            ErrorCode::NonApproaching => "NON_APPROACHING",
            ErrorCode::InconsistentMask => "INCONSISTENT_MASK",
            ErrorCode::AlignFail => "ALIGN_FAIL",
            ErrorCode::NoOverlap => "NO_OVERLAP",
            ErrorCode::OutOfTrunk => "OUT_OF_TRUNK",
            ErrorCode::TrunkTooShort => "TRUNK_TOO_SHORT",
            ErrorCode::UnknownImage => "UNKNOWN_IMAGE",
            ErrorCode::ProviderUnavailable => "PROVIDER_UNAVAILABLE",
            ErrorCode::SegmentationEmpty => "SEGMENTATION_EMPTY",
            ErrorCode::ImageFormat => "IMAGE_FORMAT",
            ErrorCode::ShapeMismatch => "SHAPE_MISMATCH",
            ErrorCode::Framing => "FRAMING",
            ErrorCode::EmptyEvaluation => "EMPTY_EVALUATION",
            ErrorCode::IncompleteRecords => "INCOMPLETE_RECORDS",
            ErrorCode::ManifestSchema => "MANIFEST_SCHEMA",
            ErrorCode::Protocol => "PROTOCOL",
            ErrorCode::Frame => "FRAME",
            ErrorCode::UnsupportedType => "UNSUPPORTED_TYPE",
            ErrorCode::Io => "IO",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorCode> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Malformed requests (as opposed to well-formed requests the pipeline rejected).
    pub fn is_protocol(self) -> bool {
        matches!(self, ErrorCode::Protocol | ErrorCode::Frame | ErrorCode::UnsupportedType)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::Domain { .. } | Error::Parameter(_) => ErrorCode::InvalidInput,
            Error::EmptyMask(_) => ErrorCode::EmptyMask,
            Error::NonApproaching { .. } => ErrorCode::NonApproaching,
            Error::InconsistentMask { .. } => ErrorCode::InconsistentMask,
            Error::AlignFailure { .. } => ErrorCode::AlignFail,
            Error::NoOverlap => ErrorCode::NoOverlap,
            Error::OutOfTrunk { .. } => ErrorCode::OutOfTrunk,
            Error::TrunkTooShort { .. } => ErrorCode::TrunkTooShort,
            Error::UnknownImage(_) => ErrorCode::UnknownImage,
            Error::ProviderUnavailable(_) => ErrorCode::ProviderUnavailable,
            Error::SegmentationEmpty => ErrorCode::SegmentationEmpty,
            Error::Format(_) => ErrorCode::ImageFormat,
            Error::Shape { .. } => ErrorCode::ShapeMismatch,
            Error::Framing { .. } => ErrorCode::Framing,
            Error::EmptyEvaluation => ErrorCode::EmptyEvaluation,
            Error::IncompleteRecords(_) => ErrorCode::IncompleteRecords,
            Error::ManifestSchema(_) => ErrorCode::ManifestSchema,
            Error::Protocol(_) => ErrorCode::Protocol,
            Error::Frame(_) => ErrorCode::Frame,
            Error::UnsupportedType(_) => ErrorCode::UnsupportedType,
            Error::Io(_) => ErrorCode::Io,
        }
    }

    pub(crate) fn positive(param: &'static str, value: f64) -> Result<f64> {
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Domain { param, value })
        }
    }
}
