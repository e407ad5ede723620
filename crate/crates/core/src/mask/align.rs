//! Far-to-close silhouette alignment and common-segment extraction.
//!
//! The transform maps continuous far-image coordinates (pixel centers sit at
//! `index + 0.5`) into the close image: `u' = scale * u + dx`,
//! `v' = scale * v + dy`. Rasterizing a warped mask samples the far mask at
//! the pre-image of each close pixel center.

use serde::{Deserialize, Serialize};

use super::profile::RowProfile;
use super::{row_profile, TrunkMask};
use crate::error::{Error, Result};

/// Minimum overlap for a far/close pair to count as the same trunk.
pub const MIN_ALIGNMENT_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTransform {
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
    /// IoU of the warped far mask against the close mask.
    pub iou: f64,
}

impl AlignmentTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, dx: 0.0, dy: 0.0, iou: 1.0 }
    }

    /// Close-image row coordinate of the center of far row `row`.
    pub fn map_row_center(&self, row: u32) -> f64 {
        self.scale * (row as f64 + 0.5) + self.dy
    }

    /// Resamples `far` into a `width` x `height` frame under this transform.
    pub fn warp(&self, far: &TrunkMask, width: u32, height: u32) -> TrunkMask {
        TrunkMask::from_fn(width, height, far.provenance(), |c, r| {
            let u = ((c as f64 + 0.5 - self.dx) / self.scale).floor();
            let v = ((r as f64 + 0.5 - self.dy) / self.scale).floor();
            u >= 0.0 && v >= 0.0 && far.get(u as u32, v as u32)
        })
    }
}

/// Search schedule for [`align_masks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchGrid {
    /// Scale range relative to the width-ratio estimate.
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub scale_step: f64,
    /// Row offsets tried on either side of base-row alignment.
    pub dy_radius: i32,
    /// Extra passes at `scale_step / 10` and `/ 50` around the coarse optimum.
    pub refine: bool,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self { scale_lo: 0.8, scale_hi: 1.25, scale_step: 0.005, dy_radius: 20, refine: true }
    }
}

/// Rows `top_row..=base_row` of the far image whose centers land inside the
/// close trunk's row span, and the heights both captures give that segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonSegment {
    pub top_row: u32,
    pub base_row: u32,
    pub h_far: u32,
    pub h_close: u32,
}

/// Runs indexed by row.
struct RunTable {
    offsets: Vec<usize>,
    spans: Vec<(u32, u32)>,
    area: u64,
}

impl RunTable {
    fn new(mask: &TrunkMask) -> Self {
        let mut offsets = vec![0usize; mask.height() as usize + 1];
        let mut spans = Vec::new();
        let mut area = 0;
        for run in mask.runs() {
            offsets[run.row as usize + 1] += 1;
            spans.push((run.start, run.end));
            area += (run.end - run.start + 1) as u64;
        }
        for i in 1..offsets.len() {
            offsets[i] += offsets[i - 1];
        }
        Self { offsets, spans, area }
    }

    fn row(&self, r: usize) -> &[(u32, u32)] {
        &self.spans[self.offsets[r]..self.offsets[r + 1]]
    }
}

struct Scorer<'a> {
    far: &'a RunTable,
    close: &'a RunTable,
    far_rows: (u32, u32),
    close_width: u32,
    close_height: u32,
}

impl Scorer<'_> {
    /// Area IoU between the warped far mask, clipped to the close frame, and
    /// the close mask. Each far pixel maps to a `scale` x `scale` square, so
    /// the score varies continuously with the transform instead of jumping
    /// between pixel-center samples.
    fn iou(&self, scale: f64, dx: f64, dy: f64) -> f64 {
        let (top, base) = self.far_rows;
        let (w, h) = (self.close_width as f64, self.close_height as f64);
        let mut warped_area = 0.0;
        let mut inter = 0.0;
        for src in top..=base {
            let y0 = (scale * src as f64 + dy).max(0.0);
            let y1 = (scale * (src as f64 + 1.0) + dy).min(h);
            if y0 >= y1 {
                continue;
            }
            let (r_lo, r_hi) = (y0.floor() as usize, (y1.ceil() as usize).min(self.close_height as usize));
            for &(start, end) in self.far.row(src as usize) {
                let x0 = (scale * start as f64 + dx).max(0.0);
                let x1 = (scale * (end as f64 + 1.0) + dx).min(w);
                if x0 >= x1 {
                    continue;
                }
                warped_area += (x1 - x0) * (y1 - y0);
                for r in r_lo..r_hi {
                    let overlap_v = y1.min(r as f64 + 1.0) - y0.max(r as f64);
                    let mut overlap_h = 0.0;
                    for &(a, b) in self.close.row(r) {
                        let lo = x0.max(a as f64);
                        let hi = x1.min(b as f64 + 1.0);
                        if hi > lo {
                            overlap_h += hi - lo;
                        }
                    }
                    inter += overlap_v * overlap_h;
                }
            }
        }
        let union = warped_area + self.close.area as f64 - inter;
        if union <= 0.0 {
            1.0
        } else {
            inter / union
        }
    }
}

fn nonzero_median(widths: &[u32]) -> Option<f64> {
    let mut w: Vec<u32> = widths.iter().copied().filter(|&w| w > 0).collect();
    if w.is_empty() {
        return None;
    }
    w.sort_unstable();
    let n = w.len();
    Some(if n % 2 == 1 { w[n / 2] as f64 } else { (w[n / 2 - 1] as f64 + w[n / 2] as f64) / 2.0 })
}

/// Offsets ordered by distance from zero: 0, -1, 1, -2, 2, ...
fn centered(radius: i32) -> impl Iterator<Item = i32> {
    (0..=2 * radius).map(|i| if i % 2 == 0 { i / 2 } else { -(i + 1) / 2 })
}

/// Estimates the scale + translation taking `far` onto `close` with the
/// default search schedule.
pub fn align_masks(far: &TrunkMask, close: &TrunkMask) -> Result<AlignmentTransform> {
    align_masks_with(far, close, &SearchGrid::default())
}

pub fn align_masks_with(far: &TrunkMask, close: &TrunkMask, grid: &SearchGrid) -> Result<AlignmentTransform> {
    let fp = row_profile(far)?;
    let cp = row_profile(close)?;

    // Width ratio over the bottom rows both spans share.
    let n = fp.height_px.min(cp.height_px) as usize;
    let far_w =
        nonzero_median(&fp.widths[fp.widths.len() - n..]).ok_or(Error::EmptyMask("far mask has no measurable rows"))?;
    let close_w = nonzero_median(&cp.widths[cp.widths.len() - n..])
        .ok_or(Error::EmptyMask("close mask has no measurable rows"))?;
    let scale0 = close_w / far_w;

    let far_runs = RunTable::new(far);
    let close_runs = RunTable::new(close);
    let scorer = Scorer {
        far: &far_runs,
        close: &close_runs,
        far_rows: (fp.top_row, fp.base_row),
        close_width: close.width(),
        close_height: close.height(),
    };

    // Column centroids coincide; base rows' bottom edges coincide (plus k rows).
    let dx_for = |s: f64| (cp.column_centroid + 0.5) - s * (fp.column_centroid + 0.5);
    let dy_for = |s: f64| (cp.base_row as f64 + 1.0) - s * (fp.base_row as f64 + 1.0);

    let mut best = AlignmentTransform { scale: scale0, dx: dx_for(scale0), dy: dy_for(scale0), iou: -1.0 };
    let consider = |s: f64, k: i32, best: &mut AlignmentTransform| {
        let (dx, dy) = (dx_for(s), dy_for(s) + k as f64);
        let iou = scorer.iou(s, dx, dy);
        if iou > best.iou {
            *best = AlignmentTransform { scale: s, dx, dy, iou };
        }
    };

    // Factors are formed as integer ratios so 1.0 is hit exactly.
    let steps_per_unit = (1.0 / grid.scale_step).round() as i64;
    let lo = (grid.scale_lo * steps_per_unit as f64).round() as i64;
    let hi = (grid.scale_hi * steps_per_unit as f64).round() as i64;
    let center = steps_per_unit.clamp(lo, hi);
    let radius = (center - lo).max(hi - center) as i32;
    for i in centered(radius) {
        let step = center + i as i64;
        if step < lo || step > hi {
            continue;
        }
        let s = scale0 * step as f64 / steps_per_unit as f64;
        for k in centered(grid.dy_radius) {
            consider(s, k, &mut best);
        }
    }

    if grid.refine {
        for (divisor, span, dy_radius) in [(10.0, 10, 2), (50.0, 5, 1)] {
            let anchor = best.scale;
            let step = grid.scale_step / divisor;
            for j in centered(span) {
                let s = anchor + j as f64 * step;
                if s <= 0.0 {
                    continue;
                }
                for k in centered(dy_radius) {
                    consider(s, k, &mut best);
                }
            }
        }
    }

    if best.iou < MIN_ALIGNMENT_IOU {
        return Err(Error::AlignFailure { iou: best.iou.max(0.0) });
    }
    Ok(best)
}

/// Fraction of the close trunk height within which a mapped far top edge is
/// taken to be the close top edge.
pub const EDGE_SNAP_FRACTION: f64 = 0.01;

/// Far rows whose image under `t` falls inside the close trunk's span.
///
/// When both trunk tops lie inside their frames and the far top maps within
/// `max(2, EDGE_SNAP_FRACTION * close height)` rows of the close top, the two
/// edges are the same physical point: the segment is the whole trunk and
/// both heights are read off the masks instead of `round(h_far * scale)`.
pub fn common_segment(far: &RowProfile, close: &RowProfile, t: &AlignmentTransform) -> Result<CommonSegment> {
    if !(t.scale > 0.0 && t.scale.is_finite()) {
        return Err(Error::Domain { param: "scale", value: t.scale });
    }
    let mapped_top = t.scale * far.top_row as f64 + t.dy;
    let tolerance = (EDGE_SNAP_FRACTION * close.height_px as f64).max(2.0);
    if far.top_row > 0 && close.top_row > 0 && (mapped_top - close.top_row as f64).abs() <= tolerance {
        return Ok(CommonSegment {
            top_row: far.top_row,
            base_row: far.base_row,
            h_far: far.height_px,
            h_close: close.height_px,
        });
    }
    // Row centers v = s (r + 0.5) + dy must satisfy top_c <= v < base_c + 1.
    let first = ((close.top_row as f64 - t.dy) / t.scale - 0.5).ceil();
    let last = ((close.base_row as f64 + 1.0 - t.dy) / t.scale - 0.5).ceil() - 1.0;
    let lo = first.max(far.top_row as f64);
    let hi = last.min(far.base_row as f64);
    if lo > hi {
        return Err(Error::NoOverlap);
    }
    let (top_row, base_row) = (lo as u32, hi as u32);
    let h_far = base_row - top_row + 1;
    Ok(CommonSegment { top_row, base_row, h_far, h_close: (h_far as f64 * t.scale).round() as u32 })
}

/// Brute-force IoU over two equal-sized rasters.
#[cfg(test)]
pub(crate) fn raster_iou(a: &TrunkMask, b: &TrunkMask) -> f64 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Renders a tapered trunk silhouette scaled by `scale` about the bottom
/// center of its base, for alignment tests.
#[cfg(test)]
pub(crate) fn tapered_trunk(width: u32, height: u32, base: (f64, f64), size: (f64, f64), scale: f64) -> TrunkMask {
    let (bx, by) = base;
    let (half_w, h) = (size.0 * scale, size.1 * scale);
    TrunkMask::from_fn(width, height, super::Provenance::Synthetic, |c, r| {
        let (u, v) = (c as f64 + 0.5, r as f64 + 0.5);
        let up = by - v;
        if !(0.0..=h).contains(&up) {
            return false;
        }
        // Linear taper to 60% width at the top plus a root flare near the base.
        let taper = 1.0 - 0.4 * up / h + 0.25 * (-(up / (0.08 * h))).exp();
        (u - bx).abs() <= half_w * taper
    })
}
