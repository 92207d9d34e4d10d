use crate::yuv_io::FramePlane;

/// An 8x8 block of luma samples, row-major.
pub type Block8 = [u8; 64];

/// Sum of absolute 8x8 Hadamard coefficients of `a - b`, divided by 4.
pub fn satd_8x8(a: &Block8, b: &Block8) -> u32 {
    let mut m = [[0i32; 8]; 8];
    for (r, row) in m.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = a[r * 8 + c] as i32 - b[r * 8 + c] as i32;
        }
    }
    hadamard_columns(&mut m);
    transpose(&mut m);
    hadamard_columns(&mut m);
    let sum: u32 = m.iter().flatten().map(|v| v.unsigned_abs()).sum();
    sum >> 2
}

// Unnormalized 8-point butterflies applied down every column at once.
#[inline(always)]
fn hadamard_columns(m: &mut [[i32; 8]; 8]) {
    for h in [1usize, 2, 4] {
        for i in 0..8 {
            if i & h != 0 {
                continue;
            }
            let (top, bottom) = m.split_at_mut(i + h);
            let a = &mut top[i];
            let b = &mut bottom[0];
            for c in 0..8 {
                let (x, y) = (a[c], b[c]);
                a[c] = x + y;
                b[c] = x - y;
            }
        }
    }
}

#[inline(always)]
fn transpose(m: &mut [[i32; 8]; 8]) {
    for r in 0..8 {
        for c in r + 1..8 {
            let t = m[r][c];
            m[r][c] = m[c][r];
            m[c][r] = t;
        }
    }
}

/// Copies the 8x8 block whose top-left corner is `(x0, y0)`, replicating
/// edge samples for any part that falls outside the plane.
pub(crate) fn block_at(plane: &FramePlane, x0: isize, y0: isize) -> Block8 {
    let inside = x0 >= 0
        && y0 >= 0
        && x0 as usize + 8 <= plane.width()
        && y0 as usize + 8 <= plane.height();
    if inside {
        return block_inside(plane, x0 as usize, y0 as usize);
    }
    let mut out = [0u8; 64];
    for r in 0..8 {
        for c in 0..8 {
            out[r * 8 + c] = plane.at_clamped(x0 + c as isize, y0 + r as isize);
        }
    }
    out
}

#[inline]
pub(crate) fn block_inside(plane: &FramePlane, x0: usize, y0: usize) -> Block8 {
    let mut out = [0u8; 64];
    let w = plane.width();
    let src = plane.samples();
    for r in 0..8 {
        let start = (y0 + r) * w + x0;
        out[r * 8..r * 8 + 8].copy_from_slice(&src[start..start + 8]);
    }
    out
}
