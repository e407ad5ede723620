use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::TrunkMask;

/// Overlap quality of a predicted mask against a reference mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub iou: f64,
    pub pixel_accuracy: f64,
    pub dice: f64,
}

/// IoU, pixel accuracy and Dice. Two empty masks agree perfectly (all 1).
pub fn seg_metrics(predicted: &TrunkMask, truth: &TrunkMask) -> Result<SegMetrics> {
    if predicted.dimensions() != truth.dimensions() {
        return Err(Error::Shape { left: predicted.dimensions(), right: truth.dimensions() });
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in predicted.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let total = (tp + fp + fneg + tn) as f64;
    let union = tp + fp + fneg;
    let (iou, dice) =
        if union == 0 { (1.0, 1.0) } else { (tp as f64 / union as f64, 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64) };
    let pixel_accuracy = if total == 0.0 { 1.0 } else { (tp + tn) as f64 / total };
    Ok(SegMetrics { iou, pixel_accuracy, dice })
}
