use super::{GRID, SEARCH_SIZE, STRIDE};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest decoded edge distance, in pixels.
const MIN_EDGE: f64 = 0.5;

/// Center of grid cell `(row, col)` in search-window pixels. The middle cell
/// sits on the window center.
pub fn cell_center(row: usize, col: usize) -> (f64, f64) {
    let half = SEARCH_SIZE as f64 / 2.0;
    let mid = (GRID / 2) as f64;
    (
        half + STRIDE as f64 * (col as f64 - mid),
        half + STRIDE as f64 * (row as f64 - mid),
    )
}

/// Foreground-minus-background logit per cell, row-major. Its argmax is the
/// argmax of the foreground probability.
pub fn foreground_margin(cls: &Tensor) -> Result<Vec<f64>> {
    if cls.shape() != [2, GRID, GRID] {
        return Err(Error::shape("foreground_margin", cls.shape(), &[2, GRID, GRID]));
    }
    let n = GRID * GRID;
    let d = cls.data();
    Ok((0..n).map(|i| d[n + i] - d[i]).collect())
}

/// Box at the most confident cell, in search-window pixels and clamped to the
/// window. Ties go to the lowest row-major index.
pub fn decode_box(reg: &Tensor, cls: &Tensor) -> Result<BBox> {
    if reg.shape() != [4, GRID, GRID] {
        return Err(Error::shape("decode_box", reg.shape(), &[4, GRID, GRID]));
    }
    let margin = foreground_margin(cls)?;
    let mut best = 0;
    for (i, &m) in margin.iter().enumerate() {
        if m > margin[best] {
            best = i;
        }
    }
    let (row, col) = (best / GRID, best % GRID);
    let (px, py) = cell_center(row, col);
    let n = GRID * GRID;
    let s = SEARCH_SIZE as f64;
    let edge = |k: usize| (reg.data()[k * n + best] * s).max(MIN_EDGE);
    let (l, t, r, b) = (edge(0), edge(1), edge(2), edge(3));
    let bbox = BBox::new(px + (r - l) / 2.0, py + (b - t) / 2.0, l + r, t + b);
    Ok(bbox.clamp_to(s, s))
}
