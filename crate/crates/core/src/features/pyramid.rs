use serde::{Deserialize, Serialize};

use super::RegionPixels;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Spatial pyramid: level `i` holds a row-major `2^i x 2^i` grid of cells.
/// Cells without usable foreground are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pyramid<T> {
    levels: Vec<Vec<Option<T>>>,
    /// Depth asked for, when the region was too small to honor it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncated_from: Option<usize>,
}

impl<T> Pyramid<T> {
    /// Validates the `4^i` cell-count law.
    pub fn from_levels(levels: Vec<Vec<Option<T>>>) -> Option<Self> {
        let ok = !levels.is_empty()
            && levels
                .iter()
                .enumerate()
                .all(|(i, l)| l.len() == 1 << (2 * i));
        ok.then_some(Self {
            levels,
            truncated_from: None,
        })
    }

    /// Deepest level index `L`.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &[Option<T>] {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[Vec<Option<T>>] {
        &self.levels
    }

    pub fn truncated_from(&self) -> Option<usize> {
        self.truncated_from
    }

    pub fn has_any(&self) -> bool {
        self.levels.iter().flatten().any(Option::is_some)
    }
}

/// Cell rectangles of one pyramid level. Remainder pixels go to the last
/// row and column.
pub fn cell_rects(width: usize, height: usize, level: usize) -> Vec<CellRect> {
    let n = 1usize << level;
    let (cw, ch) = (width / n, height / n);
    let mut out = Vec::with_capacity(n * n);
    for gy in 0..n {
        for gx in 0..n {
            let x = gx * cw;
            let y = gy * ch;
            let w = if gx + 1 == n { width - x } else { cw };
            let h = if gy + 1 == n { height - y } else { ch };
            out.push(CellRect { x, y, w, h });
        }
    }
    out
}

/// Applies `extractor` to every cell of every level up to `levels`, truncating
/// the depth when the region is narrower than `2^levels` pixels.
pub fn build_pyramid<T>(
    r: &RegionPixels,
    levels: usize,
    mut extractor: impl FnMut(&RegionPixels, CellRect) -> Option<T>,
) -> Pyramid<T> {
    let side = r.width().min(r.height());
    let feasible = (usize::BITS - 1 - side.leading_zeros()) as usize;
    let depth = levels.min(feasible);
    let levels_out = (0..=depth)
        .map(|i| {
            cell_rects(r.width(), r.height(), i)
                .into_iter()
                .map(|rect| extractor(r, rect))
                .collect()
        })
        .collect();
    Pyramid {
        levels: levels_out,
        truncated_from: (depth < levels).then_some(levels),
    }
}
