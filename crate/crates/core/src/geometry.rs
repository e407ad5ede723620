//! Closed-form pinhole photogrammetry.
//!
//! An object of physical extent `H` at distance `x` projects onto an extent
//! `y` on the sensor of a camera with focal length `z`, with `H = x * y / z`.
//! Everything here is a pure function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Length, LengthPerPixel, Unit};

/// Relative pixel-pitch mismatch beyond which the pipeline's square-pixel
/// assumption is reported.
pub const SQUARE_PIXEL_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_length: Length,
    pub sensor_width: Length,
    pub sensor_height: Length,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        focal_length: Length,
        sensor_width: Length,
        sensor_height: Length,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        Error::positive("focal_length", focal_length.in_meters())?;
        Error::positive("sensor_width", sensor_width.in_meters())?;
        Error::positive("sensor_height", sensor_height.in_meters())?;
        Error::positive("image_width", image_width as f64)?;
        Error::positive("image_height", image_height as f64)?;
        let cam = Self { focal_length, sensor_width, sensor_height, image_width, image_height };
        if !cam.has_square_pixels() {
            log::warn!(
                "non-square pixel pitch: horizontal/vertical = {:.4}; vertical pitch is used for both axes",
                cam.pixel_aspect()
            );
        }
        Ok(cam)
    }

    /// Convenience constructor taking millimeters, the unit camera APIs report.
    pub fn from_mm(
        focal_mm: f64,
        sensor_width_mm: f64,
        sensor_height_mm: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        Self::new(
            Length::millimeters(focal_mm),
            Length::millimeters(sensor_width_mm),
            Length::millimeters(sensor_height_mm),
            image_width,
            image_height,
        )
    }

    /// Same sensor, different raster size.
    pub fn with_image_size(self, image_width: u32, image_height: u32) -> Result<Self> {
        Self::new(self.focal_length, self.sensor_width, self.sensor_height, image_width, image_height)
    }

    pub fn horizontal_pitch(&self) -> Length {
        Length::meters(self.sensor_width.in_meters() / self.image_width as f64)
    }

    pub fn vertical_pitch(&self) -> Length {
        Length::meters(self.sensor_height.in_meters() / self.image_height as f64)
    }

    /// Horizontal over vertical pixel pitch.
    pub fn pixel_aspect(&self) -> f64 {
        self.horizontal_pitch().in_meters() / self.vertical_pitch().in_meters()
    }

    pub fn has_square_pixels(&self) -> bool {
        (self.pixel_aspect() - 1.0).abs() <= SQUARE_PIXEL_TOLERANCE
    }

    /// Distance factor of an ideal pinhole at `distance`: `x * pitch / f`.
    pub fn ideal_distance_factor(&self, distance: Length) -> LengthPerPixel {
        LengthPerPixel::from_meters(
            distance.in_meters() * self.vertical_pitch().in_meters() / self.focal_length.in_meters(),
        )
    }
}

/// Physical extent of an object at `distance` whose projection on the
/// sensor spans `sensor_extent`. The result is in the unit of `distance`.
pub fn project_height(distance: Length, sensor_extent: Length, focal_length: Length) -> Result<Length> {
    Error::positive("distance", distance.value())?;
    let y = Error::positive("sensor_extent", sensor_extent.in_meters())?;
    let z = Error::positive("focal_length", focal_length.in_meters())?;
    Ok(distance.scale(y / z))
}

/// Distance from the far capture position, from the projected heights of
/// one physical trunk segment seen before and after stepping `displacement`
/// towards it.
///
/// Similar triangles give `h_far * x = h_close * (x - d)`, hence
/// `x = d * h_close / (h_close - h_far)`.
pub fn estimate_distance(h_far: u32, h_close: u32, displacement: Length) -> Result<Length> {
    if h_far == 0 {
        return Err(Error::EmptyMask("far trunk height is zero pixels"));
    }
    if h_close <= h_far {
        return Err(Error::NonApproaching { h_far, h_close });
    }
    estimate_distance_real(h_far as f64, h_close as f64, displacement)
}

/// [`estimate_distance`] over real-valued (sub-pixel) heights.
pub fn estimate_distance_real(h_far: f64, h_close: f64, displacement: Length) -> Result<Length> {
    Error::positive("displacement", displacement.value())?;
    Error::positive("h_far", h_far)?;
    if h_close <= h_far {
        return Err(Error::NonApproaching { h_far: h_far.round() as u32, h_close: h_close.round() as u32 });
    }
    Ok(displacement.scale(h_close / (h_close - h_far)))
}

/// Change in the estimated distance caused by one pixel of error in the
/// height difference: `d * h_close / (h_close - h_far)^2`.
pub fn one_pixel_distance_bound(h_far: f64, h_close: f64, displacement: Length) -> Length {
    let gap = h_close - h_far;
    displacement.scale(h_close / (gap * gap))
}

/// Sensor extent covered by `extent_px` out of `image_extent_px` pixels.
pub fn sensor_extent_from_pixels(extent_px: u32, image_extent_px: u32, sensor_extent: Length) -> Result<Length> {
    if extent_px == 0 {
        return Err(Error::EmptyMask("zero-pixel extent"));
    }
    if image_extent_px == 0 {
        return Err(Error::Domain { param: "image_extent_px", value: 0.0 });
    }
    if extent_px > image_extent_px {
        return Err(Error::InconsistentMask { extent_px, image_extent_px });
    }
    Error::positive("sensor_extent", sensor_extent.value())?;
    Ok(sensor_extent.scale(extent_px as f64 / image_extent_px as f64))
}

/// Physical length per pixel: `real_extent / extent_px`.
pub fn distance_factor(real_extent: Length, extent_px: u32) -> Result<LengthPerPixel> {
    if extent_px == 0 {
        return Err(Error::EmptyMask("zero-pixel extent"));
    }
    let meters = Error::positive("real_extent", real_extent.in_meters())?;
    Ok(LengthPerPixel::from_meters(meters / extent_px as f64))
}

pub fn convert(length: Length, target: Unit) -> Length {
    length.convert(target)
}
