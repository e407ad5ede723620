//! Per-row horizontal extents of a trunk silhouette.

use serde::{Deserialize, Serialize};

use super::TrunkMask;
use crate::error::{Error, Result};

/// Rows on either side of the queried row that `width_at_row` pools.
pub const DEFAULT_MEDIAN_BAND: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowProfile {
    /// Lowest occupied row (largest index).
    pub base_row: u32,
    pub top_row: u32,
    pub height_px: u32,
    /// Horizontal extent (rightmost - leftmost + 1) of rows `top_row..=base_row`.
    pub widths: Vec<u32>,
    /// Rows inside the span that hold no set pixel.
    pub gap_rows: Vec<u32>,
    pub column_centroid: f64,
    pub area: u64,
}

impl RowProfile {
    /// Extent of `row`; 0 outside the span and on gap rows.
    pub fn width(&self, row: u32) -> u32 {
        if row < self.top_row || row > self.base_row {
            0
        } else {
            self.widths[(row - self.top_row) as usize]
        }
    }

    pub fn contains_row(&self, row: i64) -> bool {
        row >= self.top_row as i64 && row <= self.base_row as i64
    }
}

/// Profiles every set pixel of `mask`; callers select a component first.
pub fn row_profile(mask: &TrunkMask) -> Result<RowProfile> {
    let mut extents: Vec<Option<(u32, u32)>> = Vec::with_capacity(mask.height() as usize);
    let mut area = 0u64;
    let mut col_sum = 0f64;
    for r in 0..mask.height() {
        let row = mask.row(r);
        let first = row.iter().position(|&b| b);
        let ext = first.map(|lo| {
            let hi = row.iter().rposition(|&b| b).unwrap_or(lo);
            (lo as u32, hi as u32)
        });
        for (c, _) in row.iter().enumerate().filter(|(_, &b)| b) {
            area += 1;
            col_sum += c as f64;
        }
        extents.push(ext);
    }
    let top_row =
        extents.iter().position(Option::is_some).ok_or(Error::EmptyMask("cannot profile an empty mask"))? as u32;
    let base_row = extents.iter().rposition(Option::is_some).unwrap_or(top_row as usize) as u32;
    let mut widths = Vec::with_capacity((base_row - top_row + 1) as usize);
    let mut gap_rows = Vec::new();
    for r in top_row..=base_row {
        match extents[r as usize] {
            Some((lo, hi)) => widths.push(hi - lo + 1),
            None => {
                widths.push(0);
                gap_rows.push(r);
            }
        }
    }
    Ok(RowProfile {
        base_row,
        top_row,
        height_px: base_row - top_row + 1,
        widths,
        gap_rows,
        column_centroid: col_sum / area as f64,
        area,
    })
}

/// Median extent over rows `row - band ..= row + band`, clamped to the span.
///
/// With an even number of rows (clamped windows) the two middle values are
/// averaged and rounded half away from zero.
pub fn width_at_row(profile: &RowProfile, row: i64, band: u32) -> Result<u32> {
    if !profile.contains_row(row) {
        return Err(Error::OutOfTrunk { row, top_row: profile.top_row, base_row: profile.base_row });
    }
    let lo = (row - band as i64).max(profile.top_row as i64) as u32;
    let hi = (row + band as i64).min(profile.base_row as i64) as u32;
    let mut window: Vec<u32> = (lo..=hi).map(|r| profile.width(r)).collect();
    window.sort_unstable();
    let n = window.len();
    Ok(if n % 2 == 1 {
        window[n / 2]
    } else {
        ((window[n / 2 - 1] as f64 + window[n / 2] as f64) / 2.0).round() as u32
    })
}
