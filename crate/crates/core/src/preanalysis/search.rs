use serde::{Deserialize, Serialize};

use super::satd::{block_at, block_inside, satd_8x8};
use super::CU_SIZE;
use crate::error::{Error, Result};
use crate::yuv_io::FramePlane;

/// Integer-pel displacement from a CU to its reference block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MotionVector {
    pub x: i32,
    pub y: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    fn search_key(self, cost: u32) -> (u32, u32, i32, i32) {
        (cost, self.x.unsigned_abs() + self.y.unsigned_abs(), self.y, self.x)
    }
}

pub(crate) fn grid_dims(plane: &FramePlane) -> (usize, usize) {
    (plane.width().div_ceil(CU_SIZE), plane.height().div_ceil(CU_SIZE))
}

fn check_cu(plane: &FramePlane, cu_x: usize, cu_y: usize) -> Result<()> {
    let (cols, rows) = grid_dims(plane);
    if cu_x >= cols || cu_y >= rows || plane.width() < CU_SIZE || plane.height() < CU_SIZE {
        return Err(Error::CuOutOfRange { cu_x, cu_y });
    }
    Ok(())
}

/// SATD of the CU against a DC predictor built from the row above and the
/// column to the left (128 when neither exists).
pub fn estimate_intra_cost(frame: &FramePlane, cu_x: usize, cu_y: usize) -> Result<u32> {
    check_cu(frame, cu_x, cu_y)?;
    let (x0, y0) = (cu_x * CU_SIZE, cu_y * CU_SIZE);
    let mut sum = 0u32;
    let mut n = 0u32;
    if y0 > 0 {
        for x in x0..(x0 + CU_SIZE).min(frame.width()) {
            sum += frame.at(x, y0 - 1) as u32;
            n += 1;
        }
    }
    if x0 > 0 {
        for y in y0..(y0 + CU_SIZE).min(frame.height()) {
            sum += frame.at(x0 - 1, y) as u32;
            n += 1;
        }
    }
    let dc = (sum + n / 2).checked_div(n).map_or(128, |v| v as u8);
    let block = block_at(frame, x0 as isize, y0 as isize);
    Ok(satd_8x8(&block, &[dc; 64]))
}

/// Exhaustive integer-pel search in a `(2*range+1)^2` window.
///
/// Reference blocks are kept inside the reference plane, so the window is
/// clamped at the picture edges. Ties prefer the shorter vector (L1), then
/// the smaller vertical component, then the smaller horizontal one.
pub fn motion_search(
    cur: &FramePlane,
    reference: &FramePlane,
    cu_x: usize,
    cu_y: usize,
    range: usize,
) -> Result<(MotionVector, u32)> {
    check_cu(cur, cu_x, cu_y)?;
    if reference.width() < CU_SIZE || reference.height() < CU_SIZE {
        return Err(Error::InvalidPlane("reference smaller than one CU".into()));
    }
    if range == 0 {
        return Err(Error::Config("search range must be at least 1".into()));
    }
    let (x0, y0) = ((cu_x * CU_SIZE) as isize, (cu_y * CU_SIZE) as isize);
    let block = block_at(cur, x0, y0);
    let r = range as isize;
    let max_x = (reference.width() - CU_SIZE) as isize;
    let max_y = (reference.height() - CU_SIZE) as isize;
    let (lo_x, hi_x) = ((x0 - r).clamp(0, max_x), (x0 + r).clamp(0, max_x));
    let (lo_y, hi_y) = ((y0 - r).clamp(0, max_y), (y0 + r).clamp(0, max_y));

    let mut best: Option<(MotionVector, u32)> = None;
    for ry in lo_y..=hi_y {
        for rx in lo_x..=hi_x {
            let cand = block_inside(reference, rx as usize, ry as usize);
            let cost = satd_8x8(&block, &cand);
            let mv = MotionVector::new((rx - x0) as i32, (ry - y0) as i32);
            best = match best {
                Some((bmv, bcost)) if bmv.search_key(bcost) <= mv.search_key(cost) => Some((bmv, bcost)),
                _ => Some((mv, cost)),
            };
        }
    }
    Ok(best.expect("search window is never empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(w: usize, h: usize, mut s: u64) -> FramePlane {
        FramePlane::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 56) as u8
        })
    }

    // Every candidate the clamped window admits, scored independently.
    fn oracle(cur: &FramePlane, rf: &FramePlane, cu_x: usize, cu_y: usize, range: i32) -> (MotionVector, u32) {
        let (x0, y0) = ((cu_x * 8) as i32, (cu_y * 8) as i32);
        let mut cur_blk = [0u8; 64];
        for r in 0..8 {
            for c in 0..8 {
                cur_blk[r * 8 + c] = cur.at_clamped(x0 as isize + c as isize, y0 as isize + r as isize);
            }
        }
        let clampi = |v: i32, hi: i32| v.max(0).min(hi);
        let (mx, my) = (rf.width() as i32 - 8, rf.height() as i32 - 8);
        let mut all = Vec::new();
        for ry in clampi(y0 - range, my)..=clampi(y0 + range, my) {
            for rx in clampi(x0 - range, mx)..=clampi(x0 + range, mx) {
                let mut blk = [0u8; 64];
                for r in 0..8 {
                    for c in 0..8 {
                        blk[r * 8 + c] = rf.at((rx + c as i32) as usize, (ry + r as i32) as usize);
                    }
                }
                let mv = MotionVector::new(rx - x0, ry - y0);
                all.push((satd_8x8(&cur_blk, &blk), mv.x.abs() + mv.y.abs(), mv.y, mv.x, mv));
            }
        }
        all.sort_by_key(|t| (t.0, t.1, t.2, t.3));
        (all[0].4, all[0].0)
    }

    #[test]
    fn flat_frame_intra_is_free() {
        let f = FramePlane::filled(32, 32, 128);
        for (x, y) in [(0, 0), (1, 2), (3, 3)] {
            assert_eq!(estimate_intra_cost(&f, x, y).unwrap(), 0);
        }
    }

    #[test]
    fn dc_predictor_from_neighbors() {
        let f = FramePlane::from_fn(24, 24, |x, y| if (8..16).contains(&x) && (8..16).contains(&y) { 200 } else { 100 });
        assert_eq!(estimate_intra_cost(&f, 1, 1).unwrap(), 1600);
    }

    #[test]
    fn intra_index_checked() {
        let f = FramePlane::filled(16, 16, 0);
        assert!(matches!(estimate_intra_cost(&f, 2, 0), Err(Error::CuOutOfRange { .. })));
        assert!(matches!(motion_search(&f, &f, 0, 2, 1), Err(Error::CuOutOfRange { .. })));
    }

    #[test]
    fn zero_motion_on_identical_frames() {
        let f = noise(32, 24, 9);
        assert_eq!(motion_search(&f, &f, 1, 1, 4).unwrap(), (MotionVector::ZERO, 0));
    }

    #[test]
    fn recovers_horizontal_shift() {
        let cur = noise(48, 32, 3);
        let rf = FramePlane::from_fn(48, 32, |x, y| cur.at_clamped(x as isize - 2, y as isize));
        for cu_x in 1..4 {
            let (mv, cost) = motion_search(&cur, &rf, cu_x, 1, 3).unwrap();
            assert_eq!((mv, cost), (MotionVector::new(2, 0), 0));
            assert_eq!(oracle(&cur, &rf, cu_x, 1, 3), (mv, cost));
        }
    }

    #[test]
    fn matches_oracle_on_noise() {
        for seed in 0..12u64 {
            let cur = noise(40, 24, seed);
            let rf = noise(40, 24, seed + 100);
            for cu_y in 0..3 {
                for cu_x in 0..5 {
                    for range in [1, 2] {
                        let got = motion_search(&cur, &rf, cu_x, cu_y, range).unwrap();
                        assert_eq!(got, oracle(&cur, &rf, cu_x, cu_y, range as i32));
                    }
                }
            }
        }
    }

    #[test]
    fn partial_edge_cu() {
        let cur = noise(20, 20, 5);
        let (mv, _) = motion_search(&cur, &cur, 2, 2, 1).unwrap();
        // The CU origin (16,16) lies past the last legal block origin (12,12).
        assert!(16 + mv.x <= 12 && 16 + mv.y <= 12);
        assert_eq!(oracle(&cur, &cur, 2, 2, 1), motion_search(&cur, &cur, 2, 2, 1).unwrap());
    }
}
