//! Physical lengths with explicit units.
//!
//! Meters are the canonical internal unit; feet and centimeters only appear
//! at the edges (config files, reports, flags).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const METERS_PER_FOOT: f64 = 0.3048;

/// Breast height, 4.5 ft.
pub const BREAST_HEIGHT: Length = Length::new(4.5, Unit::Foot);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Meter,
    Centimeter,
    Millimeter,
    Foot,
}

impl Unit {
    /// Meters per one of this unit.
    pub const fn factor(self) -> f64 {
        match self {
            Unit::Meter => 1.0,
            Unit::Centimeter => 0.01,
            Unit::Millimeter => 0.001,
            Unit::Foot => METERS_PER_FOOT,
        }
    }

    pub const fn symbol(self) -> &'static str {
        match self {
            Unit::Meter => "m",
            Unit::Centimeter => "cm",
            Unit::Millimeter => "mm",
            Unit::Foot => "ft",
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m" | "meter" | "meters" => Ok(Unit::Meter),
            "cm" | "centimeter" | "centimeters" => Ok(Unit::Centimeter),
            "mm" | "millimeter" | "millimeters" => Ok(Unit::Millimeter),
            "ft" | "foot" | "feet" => Ok(Unit::Foot),
            other => Err(Error::Parameter(format!("unknown length unit `{other}`"))),
        }
    }
}

/// A non-negative length tagged with the unit it was expressed in.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Length {
    value: f64,
    unit: Unit,
}

impl Length {
    pub const fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    pub const fn meters(value: f64) -> Self {
        Self::new(value, Unit::Meter)
    }

    pub const fn centimeters(value: f64) -> Self {
        Self::new(value, Unit::Centimeter)
    }

    pub const fn millimeters(value: f64) -> Self {
        Self::new(value, Unit::Millimeter)
    }

    pub const fn feet(value: f64) -> Self {
        Self::new(value, Unit::Foot)
    }

    pub fn value(self) -> f64 {
        self.value
    }

    pub fn unit(self) -> Unit {
        self.unit
    }

    pub fn in_meters(self) -> f64 {
        self.value * self.unit.factor()
    }

    pub fn in_unit(self, unit: Unit) -> f64 {
        if unit == self.unit {
            self.value
        } else {
            self.in_meters() / unit.factor()
        }
    }

    pub fn convert(self, unit: Unit) -> Length {
        Length::new(self.in_unit(unit), unit)
    }

    pub fn scale(self, k: f64) -> Length {
        Length::new(self.value * k, self.unit)
    }
}

impl PartialEq for Length {
    fn eq(&self, other: &Self) -> bool {
        self.in_meters() == other.in_meters()
    }
}

impl PartialOrd for Length {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.in_meters().partial_cmp(&other.in_meters())
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit.symbol())
    }
}

/// Physical length covered by one pixel at the trunk's depth (the distance factor).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LengthPerPixel {
    meters_per_px: f64,
}

impl LengthPerPixel {
    pub fn from_meters(meters_per_px: f64) -> Self {
        Self { meters_per_px }
    }

    pub fn meters_per_px(self) -> f64 {
        self.meters_per_px
    }

    pub fn mm_per_px(self) -> f64 {
        self.meters_per_px * 1000.0
    }

    /// Physical length spanned by `px` pixels.
    pub fn length_of(self, px: f64) -> Length {
        Length::meters(px * self.meters_per_px)
    }

    /// Pixel count covering `length`, unrounded.
    pub fn pixels_for(self, length: Length) -> f64 {
        length.in_meters() / self.meters_per_px
    }
}
