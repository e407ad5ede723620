//! End-to-end DBH estimation from a far/close mask pair.
//!
//! 1. profile both masks;
//! 2. align far onto close;
//! 3. extract the common segment, giving `h_far` and `h_close`;
//! 4. take the far distance from the config or estimate it from the heights;
//! 5. turn the full far trunk height into a sensor extent and a physical height;
//! 6. divide by the pixel height to get the distance factor (DF);
//! 7. count breast height up from the base row;
//! 8. read the trunk width there;
//! 9. DBH = width * DF.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    distance_factor, estimate_distance, project_height, sensor_extent_from_pixels, CameraIntrinsics,
};
use crate::mask::{align_masks, common_segment, row_profile, width_at_row, RowProfile, TrunkMask, DEFAULT_MEDIAN_BAND};
use crate::units::{Length, LengthPerPixel, Unit, BREAST_HEIGHT};

/// Default step towards the tree between captures (5 ft).
pub const DEFAULT_DISPLACEMENT: Length = Length::feet(5.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DistanceMode {
    /// Far distance measured on site.
    Manual { far_distance: Length },
    /// Far distance recovered from the two projected heights.
    Estimated,
}

impl DistanceMode {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceMode::Manual { .. } => "manual",
            DistanceMode::Estimated => "estimated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureConfig {
    pub displacement: Length,
    pub distance_mode: DistanceMode,
    pub breast_height: Length,
    pub median_band: u32,
}

impl Default for CaptureConfig {
    /// The field protocol: 20 ft far capture, 15 ft close capture.
    fn default() -> Self {
        Self {
            displacement: DEFAULT_DISPLACEMENT,
            distance_mode: DistanceMode::Manual { far_distance: Length::feet(20.0) },
            breast_height: BREAST_HEIGHT,
            median_band: DEFAULT_MEDIAN_BAND,
        }
    }
}

impl CaptureConfig {
    pub fn manual(far_distance: Length, displacement: Length) -> Self {
        Self { displacement, distance_mode: DistanceMode::Manual { far_distance }, ..Self::default() }
    }

    pub fn estimated(displacement: Length) -> Self {
        Self { displacement, distance_mode: DistanceMode::Estimated, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        Error::positive("displacement", self.displacement.in_meters())?;
        Error::positive("breast_height", self.breast_height.in_meters())?;
        if let DistanceMode::Manual { far_distance } = self.distance_mode {
            Error::positive("far_distance", far_distance.in_meters())?;
            if far_distance.in_meters() <= self.displacement.in_meters() {
                return Err(Error::Parameter(format!(
                    "far distance {far_distance} must exceed displacement {}",
                    self.displacement
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub dbh: Length,
    pub far_distance: Length,
    pub df: LengthPerPixel,
    pub p_pixels: u32,
    /// Physical height of the trunk visible in the far image.
    pub trunk_height_visible: Length,
    pub h_far_px: u32,
    pub h_close_px: u32,
    pub breast_row: u32,
    pub alignment_iou: f64,
    pub alignment_scale: f64,
    pub mode: DistanceMode,
}

impl Measurement {
    pub fn dbh_cm(&self) -> f64 {
        self.dbh.in_unit(Unit::Centimeter)
    }

    pub fn far_distance_m(&self) -> f64 {
        self.far_distance.in_meters()
    }
}

/// Row `round(breast_height / df)` pixels above the trunk base.
pub fn breast_row(profile: &RowProfile, df: LengthPerPixel, breast_height: Length) -> Result<u32> {
    Error::positive("df", df.meters_per_px())?;
    let offset = df.pixels_for(breast_height).round() as i64;
    let row = profile.base_row as i64 - offset;
    if row < profile.top_row as i64 {
        return Err(Error::TrunkTooShort { breast_row: row, top_row: profile.top_row });
    }
    if row > profile.base_row as i64 {
        return Err(Error::Parameter(format!("negative breast height {breast_height}")));
    }
    Ok(row as u32)
}

/// Runs the full estimation on a pair of single-component trunk masks.
pub fn measure_pair(
    far: &TrunkMask,
    close: &TrunkMask,
    cam: &CameraIntrinsics,
    cfg: &CaptureConfig,
) -> Result<Measurement> {
    cfg.validate()?;
    if far.dimensions() != (cam.image_width, cam.image_height) {
        return Err(Error::Shape { left: far.dimensions(), right: (cam.image_width, cam.image_height) });
    }
    if far.dimensions() != close.dimensions() {
        return Err(Error::Shape { left: far.dimensions(), right: close.dimensions() });
    }

    let far_profile = row_profile(far)?;
    let close_profile = row_profile(close)?;

    let transform = align_masks(far, close)?;
    let segment = common_segment(&far_profile, &close_profile, &transform)?;

    let far_distance = match cfg.distance_mode {
        DistanceMode::Manual { far_distance } => far_distance,
        DistanceMode::Estimated => estimate_distance(segment.h_far, segment.h_close, cfg.displacement)?,
    };

    let trunk_px = far_profile.height_px;
    let sensor_extent = sensor_extent_from_pixels(trunk_px, cam.image_height, cam.sensor_height)?;
    let trunk_height = project_height(far_distance, sensor_extent, cam.focal_length)?;
    let df = distance_factor(trunk_height, trunk_px)?;

    let row = breast_row(&far_profile, df, cfg.breast_height)?;
    let p_pixels = width_at_row(&far_profile, row as i64, cfg.median_band)?;
    if p_pixels == 0 {
        return Err(Error::EmptyMask("no trunk pixels at breast height"));
    }
    let dbh = df.length_of(p_pixels as f64).convert(Unit::Centimeter);

    Ok(Measurement {
        dbh,
        far_distance: far_distance.convert(Unit::Meter),
        df,
        p_pixels,
        trunk_height_visible: trunk_height.convert(Unit::Meter),
        h_far_px: segment.h_far,
        h_close_px: segment.h_close,
        breast_row: row,
        alignment_iou: transform.iou,
        alignment_scale: transform.scale,
        mode: cfg.distance_mode,
    })
}
