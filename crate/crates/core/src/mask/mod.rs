//! Binary trunk masks and the analyses run over them.

mod align;
mod components;
mod profile;

use std::io::Cursor;

use image::{GrayImage, ImageFormat, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(test)]
pub(crate) use align::raster_iou;
pub use align::{
    align_masks, align_masks_with, common_segment, AlignmentTransform, CommonSegment, SearchGrid, EDGE_SNAP_FRACTION,
    MIN_ALIGNMENT_IOU,
};
pub use components::{label_components, select_trunk_component, Component};
pub use profile::{row_profile, width_at_row, RowProfile, DEFAULT_MEDIAN_BAND};

/// Where a mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    OracleFile,
    BaselineSegmenter,
    Synthetic,
    External,
}

/// Row-major binary silhouette. Set pixels belong to the trunk.
#[derive(Clone, PartialEq, Eq)]
pub struct TrunkMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    provenance: Provenance,
}

impl std::fmt::Debug for TrunkMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrunkMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count())
            .field("provenance", &self.provenance)
            .finish()
    }
}

/// A maximal horizontal run of set pixels, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub row: u32,
    pub start: u32,
    pub end: u32,
}

impl TrunkMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>, provenance: Provenance) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::Parameter(format!(
                "mask buffer holds {} pixels, expected {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, bits, provenance })
    }

    pub fn empty(width: u32, height: u32, provenance: Provenance) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize], provenance }
    }

    /// Builds a mask by evaluating `f(col, row)` at every pixel.
    pub fn from_fn(width: u32, height: u32, provenance: Provenance, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(c, r));
            }
        }
        Self { width, height, bits, provenance }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        col < self.width && row < self.height && self.bits[self.index(col, row)]
    }

    pub fn set(&mut self, col: u32, row: u32, value: bool) {
        let i = self.index(col, row);
        self.bits[i] = value;
    }

    fn index(&self, col: u32, row: u32) -> usize {
        row as usize * self.width as usize + col as usize
    }

    pub fn row(&self, row: u32) -> &[bool] {
        let start = row as usize * self.width as usize;
        &self.bits[start..start + self.width as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Runs of set pixels, ordered by row then column.
    pub fn runs(&self) -> Vec<Run> {
        let mut out = Vec::new();
        for r in 0..self.height {
            let row = self.row(r);
            let mut c = 0usize;
            while c < row.len() {
                if row[c] {
                    let start = c;
                    while c < row.len() && row[c] {
                        c += 1;
                    }
                    out.push(Run { row: r, start: start as u32, end: (c - 1) as u32 });
                } else {
                    c += 1;
                }
            }
        }
        out
    }

    /// Mirror image about the vertical center line.
    pub fn mirrored(&self) -> Self {
        Self::from_fn(self.width, self.height, self.provenance, |c, r| self.get(self.width - 1 - c, r))
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |c, r| Luma([if self.get(c, r) { 255 } else { 0 }]))
    }

    /// 8-bit grayscale PNG, 255 for trunk and 0 elsewhere.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_gray_image().write_to(&mut out, ImageFormat::Png).map_err(|e| Error::Format(e.to_string()))?;
        Ok(out.into_inner())
    }
}

/// Decodes any raster the image codecs understand. A pixel is trunk iff its
/// luminance exceeds 127.
pub fn decode_mask(bytes: &[u8], provenance: Provenance) -> Result<TrunkMask> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Format(e.to_string()))?;
    let luma = img.into_luma8();
    let (width, height) = luma.dimensions();
    let bits = luma.into_raw().into_iter().map(|v| v > 127).collect();
    TrunkMask::new(width, height, bits, provenance)
}
