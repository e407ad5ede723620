//! 4-connected component labeling over row runs.

use super::{Provenance, Run, TrunkMask};
use crate::error::{Error, Result};

/// Summary of one 4-connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub area: u64,
    pub top_row: u32,
    pub base_row: u32,
    /// Mean column index of the component's pixels.
    pub column_centroid: f64,
    pub(crate) runs: Vec<Run>,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Labels the mask's 4-connected components, ordered by their first run.
pub fn label_components(mask: &TrunkMask) -> Vec<Component> {
    let runs = mask.runs();
    let mut sets = DisjointSet::new(runs.len());

    // Runs on adjacent rows touch under 4-connectivity iff their column
    // intervals overlap.
    let mut prev_start = 0usize;
    let mut row_start = 0usize;
    for i in 0..runs.len() {
        if i > 0 && runs[i].row != runs[i - 1].row {
            prev_start = if runs[i].row == runs[i - 1].row + 1 { row_start } else { i };
            row_start = i;
        }
        let run = runs[i];
        let mut j = prev_start;
        while j < row_start {
            let other = runs[j];
            if other.end >= run.start && other.start <= run.end {
                sets.union(i, j);
            }
            if other.start > run.end {
                break;
            }
            j += 1;
        }
        // Earlier runs on the previous row that end before this one starts
        // cannot touch any later run on this row either.
        while prev_start < row_start && runs[prev_start].end < run.start {
            prev_start += 1;
        }
    }

    let mut index_of_root = std::collections::HashMap::new();
    let mut comps: Vec<Component> = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let root = sets.find(i);
        let k = *index_of_root.entry(root).or_insert_with(|| {
            comps.push(Component {
                area: 0,
                top_row: run.row,
                base_row: run.row,
                column_centroid: 0.0,
                runs: Vec::new(),
            });
            comps.len() - 1
        });
        let comp = &mut comps[k];
        let len = (run.end - run.start + 1) as u64;
        comp.area += len;
        comp.top_row = comp.top_row.min(run.row);
        comp.base_row = comp.base_row.max(run.row);
        // Sum of column indices over the run.
        comp.column_centroid += (run.start as f64 + run.end as f64) * len as f64 / 2.0;
        comp.runs.push(*run);
    }
    for comp in &mut comps {
        comp.column_centroid /= comp.area as f64;
    }
    comps
}

/// Keeps the single component nearest the image's center column.
///
/// Ties go to the larger component, then to the one whose top row is
/// highest in the frame.
pub fn select_trunk_component(mask: &TrunkMask) -> Result<TrunkMask> {
    let comps = label_components(mask);
    let center = (mask.width() as f64 - 1.0) / 2.0;
    let best = comps
        .iter()
        .min_by(|a, b| {
            let da = (a.column_centroid - center).abs();
            let db = (b.column_centroid - center).abs();
            da.total_cmp(&db).then(b.area.cmp(&a.area)).then(a.top_row.cmp(&b.top_row))
        })
        .ok_or(Error::EmptyMask("no set pixels to select a trunk from"))?;
    Ok(mask_from_runs(mask.width(), mask.height(), mask.provenance(), &best.runs))
}

pub(crate) fn mask_from_runs(width: u32, height: u32, provenance: Provenance, runs: &[Run]) -> TrunkMask {
    let mut out = TrunkMask::empty(width, height, provenance);
    for run in runs {
        for c in run.start..=run.end {
            out.set(c, run.row, true);
        }
    }
    out
}
