use std::collections::HashMap;

use super::{FrameAnalysis, CU_SIZE};
use crate::schedule::FrameType;

/// Fraction of a CU's information inherited from its references.
/// Zero when the CU has no intra cost.
#[inline]
pub fn propagate_fraction(intra_cost: f64, inter_cost: f64) -> f64 {
    if intra_cost <= 0.0 {
        0.0
    } else {
        (intra_cost - inter_cost) / intra_cost
    }
}

/// Amount handed back to the reference block(s).
#[inline]
pub fn propagate_amount(intra_cost: f64, inter_cost: f64, propagate_cost: f64) -> f64 {
    (intra_cost + propagate_cost) * propagate_fraction(intra_cost, inter_cost)
}

/// Splits `amount` over the up-to-four CUs overlapped by an 8x8 block at
/// pixel position `(px, py)`, clamped so the block lies inside the plane.
/// Calls `sink(cu_index, share)` for each non-empty overlap.
pub fn distribute_by_overlap(
    amount: f64,
    px: i64,
    py: i64,
    width: usize,
    height: usize,
    cols: usize,
    mut sink: impl FnMut(usize, f64),
) {
    let cu = CU_SIZE as i64;
    let px = px.clamp(0, width as i64 - cu);
    let py = py.clamp(0, height as i64 - cu);
    let (cx, ox) = ((px / cu) as usize, px % cu);
    let (cy, oy) = ((py / cu) as usize, py % cu);
    let xs = [(cx, cu - ox), (cx + 1, ox)];
    let ys = [(cy, cu - oy), (cy + 1, oy)];
    for &(gy, hy) in &ys {
        if hy == 0 {
            continue;
        }
        for &(gx, wx) in &xs {
            if wx == 0 {
                continue;
            }
            let area = (wx * hy) as f64;
            sink(gy * cols + gx, amount * area / (cu * cu) as f64);
        }
    }
}

/// Runs the backward pass over a window given in coding order and returns
/// the accumulated propagate cost of every CU, per window frame.
///
/// Each frame starts from zero. Frames are visited last-coded first; a CU
/// hands `(intra + propagate) * fraction` to each reference it predicts
/// from, scaled by that reference's weight and spread by overlap area.
/// References outside the window are already coded and receive nothing.
/// I frames only receive.
pub fn propagate_window(window: &[&FrameAnalysis]) -> Vec<Vec<f64>> {
    let mut acc: Vec<Vec<f64>> = window.iter().map(|f| vec![0.0; f.cus.len()]).collect();
    let position: HashMap<usize, usize> = window.iter().enumerate().map(|(i, f)| (f.index, i)).collect();

    for src in (0..window.len()).rev() {
        let frame = window[src];
        if frame.kind == FrameType::I {
            continue;
        }
        for (ci, cu) in frame.cus.iter().enumerate() {
            let amount = propagate_amount(cu.intra_cost as f64, cu.inter_cost as f64, acc[src][ci]);
            if amount == 0.0 {
                continue;
            }
            let (cu_x, cu_y) = ((ci % frame.cols) as i64, (ci / frame.cols) as i64);
            for share in &cu.refs {
                let Some(&dst) = position.get(&share.frame) else { continue };
                if dst >= src {
                    continue;
                }
                let target = window[dst];
                let buf = &mut acc[dst];
                distribute_by_overlap(
                    amount * share.weight,
                    cu_x * CU_SIZE as i64 + share.mv.x as i64,
                    cu_y * CU_SIZE as i64 + share.mv.y as i64,
                    target.width,
                    target.height,
                    target.cols,
                    |idx, v| buf[idx] += v,
                );
            }
        }
    }
    acc
}
