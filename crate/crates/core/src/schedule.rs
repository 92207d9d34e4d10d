//! Frame-type decision and coding order for the 4-layer hierarchy.
//!
//! Layer 0 is the I frame, layer 1 the P anchors, layer 2 the referenced
//! B frame in the middle of each 4-frame mini-GOP and layer 3 the
//! non-referenced B frames. In display order a mini-GOP reads
//! `B3 B2 B3 P`; it is coded `P B2 B3 B3`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frames per hierarchical mini-GOP.
pub const MINI_GOP: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
    B,
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameType::I => "I",
            FrameType::P => "P",
            FrameType::B => "B",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduledFrame {
    /// Display index.
    pub index: usize,
    pub kind: FrameType,
    pub layer: u8,
    /// Display indices of the reference pictures (0 for I, 1 for P, 2 for B).
    pub refs: Vec<usize>,
    /// Rate-control GOP this frame belongs to; `None` for I frames.
    pub gop: Option<usize>,
    /// Position inside its rate-control GOP in coding order.
    pub gop_pos: usize,
}

impl ScheduledFrame {
    pub fn is_reference(&self) -> bool {
        self.layer < 3
    }
}

/// Builds the coding-order schedule for `frame_count` pictures.
///
/// An I frame is placed at display index 0 and, when `intra_period > 0`, at
/// every multiple of `intra_period`. Between I frames the pictures are coded
/// in mini-GOPs of four; a trailing partial mini-GOP gets a P anchor at its
/// end and non-referenced B frames before it. Rate-control GOPs are
/// consecutive runs of `gop_size` coded P/B frames that never span an I frame.
pub fn build_schedule(frame_count: usize, intra_period: usize, gop_size: usize) -> Result<Vec<ScheduledFrame>> {
    if frame_count == 0 {
        return Err(Error::Schedule("no frames".into()));
    }
    if gop_size == 0 {
        return Err(Error::Schedule("gop_size must be at least 1".into()));
    }

    let mut order = Vec::with_capacity(frame_count);
    let mut segment_start = 0;
    while segment_start < frame_count {
        let segment_end = if intra_period > 0 {
            (segment_start + intra_period).min(frame_count)
        } else {
            frame_count
        };
        order.push(ScheduledFrame {
            index: segment_start,
            kind: FrameType::I,
            layer: 0,
            refs: Vec::new(),
            gop: None,
            gop_pos: 0,
        });

        let mut anchor = segment_start;
        while anchor + 1 < segment_end {
            let len = (segment_end - 1 - anchor).min(MINI_GOP);
            let p = anchor + len;
            order.push(frame(p, FrameType::P, 1, vec![anchor]));
            if len == MINI_GOP {
                order.push(frame(anchor + 2, FrameType::B, 2, vec![anchor, p]));
                order.push(frame(anchor + 1, FrameType::B, 3, vec![anchor, anchor + 2]));
                order.push(frame(anchor + 3, FrameType::B, 3, vec![anchor + 2, p]));
            } else {
                for b in anchor + 1..p {
                    order.push(frame(b, FrameType::B, 3, vec![anchor, p]));
                }
            }
            anchor = p;
        }
        segment_start = segment_end;
    }

    let mut gop = 0;
    let mut pos = 0;
    let mut open = false;
    for f in order.iter_mut() {
        if f.kind == FrameType::I {
            if open {
                gop += 1;
            }
            open = false;
            pos = 0;
            continue;
        }
        if pos == gop_size {
            gop += 1;
            pos = 0;
        }
        f.gop = Some(gop);
        f.gop_pos = pos;
        open = true;
        pos += 1;
    }
    Ok(order)
}

fn frame(index: usize, kind: FrameType, layer: u8, refs: Vec<usize>) -> ScheduledFrame {
    ScheduledFrame { index, kind, layer, refs, gop: None, gop_pos: 0 }
}
