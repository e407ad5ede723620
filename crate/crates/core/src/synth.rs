//! Ground-truth far/close mask pairs of an upright cylindrical trunk.
//!
//! The camera sits `camera_height` above the ground with a horizontal
//! optical axis through the trunk's center line. Each pixel is set iff the
//! ray through its center hits the trunk silhouette; there is no
//! anti-aliasing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::mask::{Provenance, TrunkMask};
use crate::units::{Length, Unit, BREAST_HEIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SilhouetteModel {
    /// Planar disc of diameter 2r at the trunk axis: half-width `f r / x`.
    #[default]
    ThinObject,
    /// Tangent sightlines: half-width `f r / sqrt(x^2 - r^2)`.
    Tangent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub trunk_radius: Length,
    pub trunk_height: Length,
    pub far_distance: Length,
    pub displacement: Length,
    pub camera_height: Length,
    pub intrinsics: CameraIntrinsics,
    pub silhouette_model: SilhouetteModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub dbh_cm: f64,
    pub far_distance_m: f64,
    pub df_mm_per_px: f64,
}

#[derive(Debug, Clone)]
pub struct RenderedPair {
    pub far: TrunkMask,
    pub close: TrunkMask,
    pub truth: SceneTruth,
}

/// Phone-like portrait camera: 6 mm lens, 4.8 x 6.4 mm sensor, 3000 x 4000 px.
pub fn portrait_camera() -> CameraIntrinsics {
    CameraIntrinsics::from_mm(6.0, 4.8, 6.4, 3000, 4000).expect("constant intrinsics are valid")
}

impl SyntheticScene {
    /// The 20 ft / 15 ft capture protocol. The 3 m bole (ground to crown
    /// base) stays inside both portrait frames.
    pub fn field_protocol(dbh_cm: f64) -> Self {
        Self {
            trunk_radius: Length::centimeters(dbh_cm / 2.0),
            trunk_height: Length::meters(3.0),
            far_distance: Length::feet(20.0),
            displacement: Length::feet(5.0),
            camera_height: BREAST_HEIGHT,
            intrinsics: portrait_camera(),
            silhouette_model: SilhouetteModel::ThinObject,
        }
    }

    pub fn dbh(&self) -> Length {
        self.trunk_radius.scale(2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let x = Error::positive("far_distance", self.far_distance.in_meters())?;
        let d = Error::positive("displacement", self.displacement.in_meters())?;
        let r = Error::positive("trunk_radius", self.trunk_radius.in_meters())?;
        Error::positive("camera_height", self.camera_height.in_meters())?;
        if x <= d {
            return Err(Error::Parameter(format!("far distance {x} m must exceed displacement {d} m")));
        }
        if r >= x / 10.0 {
            return Err(Error::Parameter(format!("trunk radius {r} m must be below far distance / 10")));
        }
        if self.trunk_height.in_meters() < BREAST_HEIGHT.in_meters() {
            return Err(Error::Parameter("trunk must reach breast height".into()));
        }
        Ok(())
    }

    pub fn truth(&self) -> SceneTruth {
        SceneTruth {
            dbh_cm: self.dbh().in_unit(Unit::Centimeter),
            far_distance_m: self.far_distance.in_meters(),
            df_mm_per_px: self.intrinsics.ideal_distance_factor(self.far_distance).mm_per_px(),
        }
    }

    /// Half-width of the trunk silhouette on the sensor, in meters.
    pub fn projected_half_width(&self, distance: f64) -> f64 {
        let f = self.intrinsics.focal_length.in_meters();
        let r = self.trunk_radius.in_meters();
        match self.silhouette_model {
            SilhouetteModel::ThinObject => f * r / distance,
            SilhouetteModel::Tangent => f * r / (distance * distance - r * r).sqrt(),
        }
    }

    /// Renders the silhouette with the camera `distance` meters from the trunk axis.
    pub fn render_at(&self, distance: f64) -> Result<TrunkMask> {
        let cam = &self.intrinsics;
        let (w, h) = (cam.image_width, cam.image_height);
        let f = cam.focal_length.in_meters();
        let pitch_u = cam.horizontal_pitch().in_meters();
        let pitch_v = cam.vertical_pitch().in_meters();
        let half = self.projected_half_width(distance);
        let cam_h = self.camera_height.in_meters();
        let top = self.trunk_height.in_meters();

        let margin_u = (w as f64 / 2.0 - 1.0) * pitch_u;
        if half > margin_u {
            return Err(Error::Framing {
                reason: "trunk wider than the frame",
                max_radius_m: margin_u * distance / f,
                max_camera_height_m: f64::NAN,
            });
        }
        let margin_v = (h as f64 / 2.0 - 1.0) * pitch_v;
        if cam_h * f / distance > margin_v {
            return Err(Error::Framing {
                reason: "trunk base below the frame",
                max_radius_m: margin_u * distance / f,
                max_camera_height_m: margin_v * distance / f,
            });
        }

        let cols: Vec<bool> = (0..w).map(|c| ((c as f64 + 0.5 - w as f64 / 2.0) * pitch_u).abs() <= half).collect();
        Ok(TrunkMask::from_fn(w, h, Provenance::Synthetic, |c, r| {
            if !cols[c as usize] {
                return false;
            }
            let v = (r as f64 + 0.5 - h as f64 / 2.0) * pitch_v;
            let y = cam_h - v * distance / f;
            (0.0..=top).contains(&y)
        }))
    }

    /// Far and close masks plus ground truth. A zero displacement renders
    /// the same view twice.
    pub fn render_pair(&self) -> Result<RenderedPair> {
        let x = Error::positive("far_distance", self.far_distance.in_meters())?;
        let d = self.displacement.in_meters();
        if !(0.0..x).contains(&d) {
            return Err(Error::Parameter(format!("displacement {d} m must lie in [0, {x}) m")));
        }
        let far = self.render_at(x)?;
        let close = if d == 0.0 { far.clone() } else { self.render_at(x - d)? };
        Ok(RenderedPair { far, close, truth: self.truth() })
    }
}

/// Sampling ranges for [`random_scene`]; all bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneRanges {
    pub dbh_cm: (f64, f64),
    pub far_distance_m: (f64, f64),
    pub displacement_m: (f64, f64),
    pub trunk_height_m: (f64, f64),
    pub intrinsics: CameraIntrinsics,
    pub silhouette_model: SilhouetteModel,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            dbh_cm: (30.0, 100.0),
            far_distance_m: (4.0, 10.0),
            displacement_m: (1.0, 2.0),
            // Bole tops stay below the upper frame edge (2.97 m) at the
            // nearest close capture, 2 m away.
            trunk_height_m: (2.0, 2.9),
            // Wider field of view than `portrait_camera` so the base stays
            // in frame down to a 2 m close capture.
            intrinsics: CameraIntrinsics::from_mm(4.0, 4.8, 6.4, 3000, 4000).expect("constant intrinsics are valid"),
            silhouette_model: SilhouetteModel::ThinObject,
        }
    }
}

impl SceneRanges {
    /// Fixed distances, random diameter: the acceptance protocol.
    pub fn field_protocol() -> Self {
        Self {
            far_distance_m: (6.096, 6.096),
            displacement_m: (1.524, 1.524),
            trunk_height_m: (3.0, 3.0),
            intrinsics: portrait_camera(),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("dbh_cm", self.dbh_cm),
            ("far_distance_m", self.far_distance_m),
            ("displacement_m", self.displacement_m),
            ("trunk_height_m", self.trunk_height_m),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::Parameter(format!("empty or non-positive range {name} = [{lo}, {hi}]")));
            }
        }
        // Some combination inside the ranges must satisfy the scene invariants.
        if self.far_distance_m.1 <= self.displacement_m.0 {
            return Err(Error::Parameter("far distances must exceed some displacement".into()));
        }
        if self.dbh_cm.0 / 200.0 >= self.far_distance_m.1 / 10.0 {
            return Err(Error::Parameter("smallest radius must stay below the largest far distance / 10".into()));
        }
        if self.trunk_height_m.0 < BREAST_HEIGHT.in_meters() {
            return Err(Error::Parameter("trunk heights must reach breast height".into()));
        }
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Draws before giving up on a range combination that rarely satisfies the invariants.
const MAX_DRAWS: usize = 10_000;

/// Deterministic scene for `seed`. Draws violating the scene invariants
/// (far distance not beyond the displacement, radius not below a tenth of
/// the distance) are rejected and redrawn from the same stream.
pub fn random_scene(seed: u64, ranges: &SceneRanges) -> Result<SyntheticScene> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        let dbh_cm = sample(&mut rng, ranges.dbh_cm);
        let far = sample(&mut rng, ranges.far_distance_m);
        let disp = sample(&mut rng, ranges.displacement_m);
        let trunk = sample(&mut rng, ranges.trunk_height_m);
        let scene = SyntheticScene {
            trunk_radius: Length::centimeters(dbh_cm / 2.0),
            trunk_height: Length::meters(trunk),
            far_distance: Length::meters(far),
            displacement: Length::meters(disp),
            camera_height: BREAST_HEIGHT,
            intrinsics: ranges.intrinsics,
            silhouette_model: ranges.silhouette_model,
        };
        if scene.validate().is_ok() {
            return Ok(scene);
        }
    }
    Err(Error::Parameter(format!("no valid scene after {MAX_DRAWS} draws; ranges are too tight")))
}

/// Flat key-value scene description, one quantity per unit-suffixed key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub dbh_cm: f64,
    pub trunk_height_m: f64,
    pub far_distance_m: f64,
    pub displacement_m: f64,
    #[serde(default = "default_camera_height_m")]
    pub camera_height_m: f64,
    pub focal_mm: f64,
    pub sensor_w_mm: f64,
    pub sensor_h_mm: f64,
    pub image_w_px: u32,
    pub image_h_px: u32,
    #[serde(default)]
    pub silhouette: SilhouetteModel,
}

fn default_camera_height_m() -> f64 {
    BREAST_HEIGHT.in_meters()
}

impl SceneSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parameter(format!("scene spec: {e}")))
    }

    pub fn to_scene(&self) -> Result<SyntheticScene> {
        let scene = SyntheticScene {
            trunk_radius: Length::centimeters(self.dbh_cm / 2.0),
            trunk_height: Length::meters(self.trunk_height_m),
            far_distance: Length::meters(self.far_distance_m),
            displacement: Length::meters(self.displacement_m),
            camera_height: Length::meters(self.camera_height_m),
            intrinsics: CameraIntrinsics::from_mm(
                self.focal_mm,
                self.sensor_w_mm,
                self.sensor_h_mm,
                self.image_w_px,
                self.image_h_px,
            )?,
            silhouette_model: self.silhouette,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Grayscale PNG "photograph" of `mask`: a dark, noisy trunk in front of a
/// bright sky gradient. Deterministic for `seed`. The two intensity bands do
/// not overlap, so a global threshold recovers `mask` exactly.
pub fn photograph(mask: &TrunkMask, seed: u64) -> Result<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = mask.dimensions();
    let img = image::GrayImage::from_fn(w, h, |c, r| {
        let noise: i32 = rng.random_range(-12..=12);
        let base = if mask.get(c, r) {
            // Bark streaks every few columns.
            if c % 7 < 2 {
                45
            } else {
                65
            }
        } else {
            235 - (40 * r / h.max(1)) as i32
        };
        image::Luma([(base + noise) as u8])
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}
