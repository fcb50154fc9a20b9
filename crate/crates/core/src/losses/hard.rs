use crate::autodiff::{Graph, Var};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tracker::{cell_center, GRID, SEARCH_SIZE};

/// Smooth-L1 transition point, in units of the search-window size (4 px).
pub const REG_SMOOTH_L1_BETA: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug)]
pub struct HardLosses {
    pub cls: Var,
    pub reg: Var,
    pub positives: usize,
}

/// Grid cells whose center lies inside the central half (by width and height)
/// of `gt`, row-major.
pub fn positive_cells(gt: &BBox) -> Vec<usize> {
    let core = BBox::new(gt.cx, gt.cy, gt.w / 2.0, gt.h / 2.0);
    (0..GRID * GRID)
        .filter(|&i| {
            let (x, y) = cell_center(i / GRID, i % GRID);
            x >= core.left() && x <= core.right() && y >= core.top() && y <= core.bottom()
        })
        .collect()
}

/// Normalized (left, top, right, bottom) distances from cell `i` to the edges of `gt`.
pub fn edge_targets(gt: &BBox, i: usize) -> [f64; 4] {
    let (x, y) = cell_center(i / GRID, i % GRID);
    let s = SEARCH_SIZE as f64;
    [
        (x - gt.left()) / s,
        (y - gt.top()) / s,
        (gt.right() - x) / s,
        (gt.bottom() - y) / s,
    ]
}

/// Supervised losses for one sample with ground truth `gt` in search-window
/// pixels: class-balanced two-way cross-entropy over the grid, and smooth-L1
/// on edge distances over positive cells (exactly 0 when there are none).
pub fn loss_hard(g: &mut Graph, cls: Var, reg: Var, gt: &BBox) -> Result<HardLosses> {
    let n = GRID * GRID;
    if g.value(cls).shape() != [2, GRID, GRID] {
        return Err(Error::shape("loss_hard", g.value(cls).shape(), &[2, GRID, GRID]));
    }
    if g.value(reg).shape() != [4, GRID, GRID] {
        return Err(Error::shape("loss_hard", g.value(reg).shape(), &[4, GRID, GRID]));
    }
    let positives = positive_cells(gt);
    let is_pos = {
        let mut v = vec![false; n];
        positives.iter().for_each(|&i| v[i] = true);
        v
    };
    let n_pos = positives.len();
    let n_neg = n - n_pos;

    let mut weights = Tensor::zeros(&[2, GRID, GRID]);
    let pos_share = if n_neg == 0 { 1.0 } else if n_pos == 0 { 0.0 } else { 0.5 };
    for i in 0..n {
        if is_pos[i] {
            weights.data_mut()[n + i] = -pos_share / n_pos as f64;
        } else {
            weights.data_mut()[i] = -(1.0 - pos_share) / n_neg as f64;
        }
    }
    let logp = g.log_softmax(cls, 0, 1.0)?;
    let w = g.constant(weights);
    let weighted = g.mul(logp, w)?;
    let cls_loss = g.sum(weighted);

    let reg_loss = if n_pos == 0 {
        g.constant(Tensor::scalar(0.0))
    } else {
        let mut target = Tensor::zeros(&[4, GRID, GRID]);
        let mut mask = Tensor::zeros(&[4, GRID, GRID]);
        for &i in &positives {
            for (k, t) in edge_targets(gt, i).into_iter().enumerate() {
                target.data_mut()[k * n + i] = t;
                mask.data_mut()[k * n + i] = 1.0 / (4 * n_pos) as f64;
            }
        }
        let t = g.constant(target);
        let diff = g.sub(reg, t)?;
        let sl1 = g.smooth_l1(diff, REG_SMOOTH_L1_BETA)?;
        let m = g.constant(mask);
        let masked = g.mul(sl1, m)?;
        g.sum(masked)
    };
    Ok(HardLosses {
        cls: cls_loss,
        reg: reg_loss,
        positives: n_pos,
    })
}
