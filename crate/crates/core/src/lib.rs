//! Tree diameter at breast height (DBH) from a far/close photo pair.
//!
//! The operator photographs a trunk, steps a known distance towards it and
//! photographs it again. From the two trunk masks the pipeline recovers the
//! camera-to-trunk distance, the physical size of one pixel at the trunk,
//! and finally the trunk width at breast height.
//!
//! ```
//! use dbh_core::synth::SyntheticScene;
//! use dbh_core::pipeline::{measure_pair, CaptureConfig};
//! use dbh_core::units::Length;
//!
//! let scene = SyntheticScene::field_protocol(45.0);
//! let pair = scene.render_pair().unwrap();
//! let cfg = CaptureConfig::manual(Length::feet(20.0), Length::feet(5.0));
//! let m = measure_pair(&pair.far, &pair.close, &scene.intrinsics, &cfg).unwrap();
//! assert!((m.dbh_cm() - 45.0).abs() < 0.45);
//! ```

pub mod error;
pub mod eval;
pub mod geometry;
pub mod mask;
pub mod pipeline;
pub mod providers;
pub mod service;
pub mod synth;
pub mod units;

pub use error::{Error, ErrorCode, Result};
pub use geometry::CameraIntrinsics;
pub use mask::{RowProfile, TrunkMask};
pub use pipeline::{measure_pair, CaptureConfig, DistanceMode, Measurement};
pub use units::{Length, LengthPerPixel, Unit};
