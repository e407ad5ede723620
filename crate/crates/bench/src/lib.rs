//! Inputs shared by the criterion benches.

use dbh_core::synth::{portrait_camera, RenderedPair, SyntheticScene};
use dbh_core::CameraIntrinsics;

/// A field-protocol pair rendered at `width` x `height`.
pub fn field_pair(dbh_cm: f64, width: u32, height: u32) -> (RenderedPair, SyntheticScene) {
    let mut scene = SyntheticScene::field_protocol(dbh_cm);
    scene.intrinsics = camera(width, height);
    (scene.render_pair().expect("field protocol renders"), scene)
}

pub fn camera(width: u32, height: u32) -> CameraIntrinsics {
    portrait_camera().with_image_size(width, height).expect("positive size")
}
