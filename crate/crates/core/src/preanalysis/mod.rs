//! Lookahead pre-analysis on half-resolution luma.
//!
//! Every 8x8 CU gets an intra cost (DC prediction) and an inter cost (best
//! integer-pel match in each reference); the backward CU-tree pass then
//! accumulates how much later pictures depend on each CU and turns that into
//! a non-positive QP offset.

mod propagate;
mod satd;
mod search;

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::FrameType;
use crate::yuv_io::FramePlane;

pub use propagate::{distribute_by_overlap, propagate_amount, propagate_fraction, propagate_window};
pub use satd::{satd_8x8, Block8};
pub use search::{estimate_intra_cost, motion_search, MotionVector};

pub const CU_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreAnalysisConfig {
    /// Frames in the propagation window, in coding order.
    pub lookahead_n: usize,
    /// Integer-pel search range on the half-resolution planes.
    pub search_range: usize,
    /// Strength `s` of the offset `-s * log2((intra + propagate) / intra)`.
    pub cutree_strength: f64,
    pub cu_size: usize,
}

impl Default for PreAnalysisConfig {
    fn default() -> Self {
        Self { lookahead_n: 20, search_range: 8, cutree_strength: 2.0, cu_size: CU_SIZE }
    }
}

impl PreAnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lookahead_n < 2 {
            return Err(Error::Config("lookahead_n must be at least 2".into()));
        }
        if self.search_range < 1 {
            return Err(Error::Config("search_range must be at least 1".into()));
        }
        if !(self.cutree_strength > 0.0 && self.cutree_strength.is_finite()) {
            return Err(Error::Config("cutree_strength must be positive".into()));
        }
        if self.cu_size != CU_SIZE {
            return Err(Error::Config(format!("cu_size must be {CU_SIZE}")));
        }
        Ok(())
    }
}

/// One reference a CU predicts from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefShare {
    /// Display index of the reference picture.
    pub frame: usize,
    /// Portion of the propagated amount sent to this reference.
    pub weight: f64,
    pub mv: MotionVector,
    /// Best SATD found in this reference.
    pub cost: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CuStats {
    pub intra_cost: u32,
    /// Best inter cost, never above `intra_cost`.
    pub inter_cost: u32,
    pub propagate_cost: f64,
    /// Vector into the cheapest reference.
    pub mv: MotionVector,
    pub refs: Vec<RefShare>,
    pub delta_qp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    /// Display index.
    pub index: usize,
    pub kind: FrameType,
    /// Half-resolution plane size.
    pub width: usize,
    pub height: usize,
    pub cols: usize,
    pub rows: usize,
    pub cus: Vec<CuStats>,
    pub epp: f64,
    pub avg_abs_delta_qp: f64,
    pub avg_intra_cost: f64,
    pub avg_propagate_cost: f64,
}

impl FrameAnalysis {
    pub fn from_cus(index: usize, kind: FrameType, width: usize, height: usize, cus: Vec<CuStats>) -> Self {
        let cols = width.div_ceil(CU_SIZE);
        let rows = height.div_ceil(CU_SIZE);
        assert_eq!(cus.len(), cols * rows, "CU grid does not match {width}x{height}");
        let avg_intra_cost = mean(cus.iter().map(|c| c.intra_cost as f64));
        let avg_propagate_cost = mean(cus.iter().map(|c| c.propagate_cost));
        Self {
            index,
            kind,
            width,
            height,
            cols,
            rows,
            cus,
            epp: 0.0,
            avg_abs_delta_qp: 0.0,
            avg_intra_cost,
            avg_propagate_cost,
        }
    }

    /// Copy of this frame with the given propagate costs installed.
    pub fn with_propagate(&self, propagate: &[f64]) -> Self {
        assert_eq!(propagate.len(), self.cus.len());
        let mut out = self.clone();
        for (cu, &p) in out.cus.iter_mut().zip(propagate) {
            cu.propagate_cost = p;
            cu.delta_qp = 0.0;
        }
        out.avg_propagate_cost = mean(propagate.iter().copied());
        out.avg_abs_delta_qp = 0.0;
        out
    }

    pub fn total_intra_cost(&self) -> f64 {
        self.cus.iter().map(|c| c.intra_cost as f64).sum()
    }

    pub fn total_inter_cost(&self) -> f64 {
        self.cus.iter().map(|c| c.inter_cost as f64).sum()
    }

    pub fn cu_qp_offsets(&self) -> Vec<f64> {
        self.cus.iter().map(|c| c.delta_qp).collect()
    }

    pub fn mean_delta_qp(&self) -> f64 {
        mean(self.cus.iter().map(|c| c.delta_qp))
    }

    /// Fills per-CU offsets and the frame averages in place.
    pub fn fill_delta_qp(&mut self, strength: f64) {
        for cu in &mut self.cus {
            cu.delta_qp = cu_delta_qp(cu.intra_cost as f64, cu.propagate_cost, strength);
        }
        self.avg_abs_delta_qp = mean(self.cus.iter().map(|c| c.delta_qp.abs()));
        self.avg_intra_cost = mean(self.cus.iter().map(|c| c.intra_cost as f64));
        self.avg_propagate_cost = mean(self.cus.iter().map(|c| c.propagate_cost));
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `-s * log2((intra + propagate) / intra)`, zero for CUs without intra cost.
pub fn cu_delta_qp(intra_cost: f64, propagate_cost: f64, strength: f64) -> f64 {
    if intra_cost <= 0.0 || propagate_cost <= 0.0 {
        return 0.0;
    }
    -strength * ((intra_cost + propagate_cost) / intra_cost).log2()
}

/// Per-CU intra and inter costs of one picture; propagate costs stay zero.
///
/// `refs` lists the reference pictures as `(display index, plane)`. Each
/// reference receives an equal weight of the propagated amount.
pub fn estimate_frame_costs(
    index: usize,
    kind: FrameType,
    plane: &FramePlane,
    refs: &[(usize, &FramePlane)],
    cfg: &PreAnalysisConfig,
) -> Result<FrameAnalysis> {
    if plane.width() < CU_SIZE || plane.height() < CU_SIZE {
        return Err(Error::InvalidPlane(format!(
            "{}x{} is smaller than one CU",
            plane.width(),
            plane.height()
        )));
    }
    match (kind, refs.len()) {
        (FrameType::I, 0) | (FrameType::P, 1) | (FrameType::B, 2) => {}
        (k, n) => return Err(Error::Schedule(format!("{k} frame {index} with {n} references"))),
    }
    for (_, r) in refs {
        if r.width() != plane.width() || r.height() != plane.height() {
            return Err(Error::InvalidPlane("reference size differs from the current picture".into()));
        }
    }

    let cols = plane.width().div_ceil(CU_SIZE);
    let rows = plane.height().div_ceil(CU_SIZE);
    let weight = if refs.is_empty() { 0.0 } else { 1.0 / refs.len() as f64 };
    let cus = (0..cols * rows)
        .into_par_iter()
        .map(|i| {
            let (cu_x, cu_y) = (i % cols, i / cols);
            let intra = estimate_intra_cost(plane, cu_x, cu_y)?;
            let mut shares = Vec::with_capacity(refs.len());
            let mut best: Option<(u32, MotionVector)> = None;
            for &(ref_index, reference) in refs {
                let (mv, cost) = motion_search(plane, reference, cu_x, cu_y, cfg.search_range)?;
                shares.push(RefShare { frame: ref_index, weight, mv, cost });
                if best.is_none_or(|(c, _)| cost < c) {
                    best = Some((cost, mv));
                }
            }
            let (inter, mv) = best.unwrap_or((intra, MotionVector::ZERO));
            Ok(CuStats {
                intra_cost: intra,
                inter_cost: inter.min(intra),
                propagate_cost: 0.0,
                mv,
                refs: shares,
                delta_qp: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameAnalysis::from_cus(index, kind, plane.width(), plane.height(), cus))
}

/// A picture inside the lookahead window.
#[derive(Clone, Debug)]
pub struct LookaheadFrame<'a> {
    pub index: usize,
    pub kind: FrameType,
    pub plane: &'a FramePlane,
    pub refs: Vec<usize>,
}

/// Costs plus backward propagation for a window given in coding order.
///
/// `past` holds already-coded pictures that window frames may reference;
/// they are searched but receive no propagation. Offsets are left at zero;
/// see [`compute_delta_qp`].
pub fn analyze_lookahead(
    window: &[LookaheadFrame<'_>],
    past: &[(usize, &FramePlane)],
    cfg: &PreAnalysisConfig,
) -> Result<Vec<FrameAnalysis>> {
    cfg.validate()?;
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if window.len() > cfg.lookahead_n {
        return Err(Error::Schedule(format!(
            "window of {} frames exceeds lookahead_n = {}",
            window.len(),
            cfg.lookahead_n
        )));
    }

    let mut planes: HashMap<usize, &FramePlane> = past.iter().copied().collect();
    let mut seen = HashSet::new();
    let mut costs = Vec::with_capacity(window.len());
    for f in window {
        let mut refs = Vec::with_capacity(f.refs.len());
        for r in &f.refs {
            let plane = planes.get(r).ok_or_else(|| {
                Error::Schedule(format!("frame {} references {} outside the window and past", f.index, r))
            })?;
            refs.push((*r, *plane));
        }
        costs.push(estimate_frame_costs(f.index, f.kind, f.plane, &refs, cfg)?);
        if !seen.insert(f.index) {
            return Err(Error::Schedule(format!("frame {} appears twice", f.index)));
        }
        planes.insert(f.index, f.plane);
    }

    let refs: Vec<&FrameAnalysis> = costs.iter().collect();
    let acc = propagate_window(&refs);
    Ok(costs.iter().zip(acc).map(|(c, p)| c.with_propagate(&p)).collect())
}

/// Returns `analysis` with per-CU offsets and frame averages filled in.
pub fn compute_delta_qp(analysis: &FrameAnalysis, cfg: &PreAnalysisConfig) -> FrameAnalysis {
    let mut out = analysis.clone();
    out.fill_delta_qp(cfg.cutree_strength);
    out
}

/// Mean absolute per-pixel difference between consecutive pictures of the
/// window, over at most `n` pictures.
pub fn compute_epp(frames: &[&FramePlane], n: usize) -> Result<f64> {
    let used = n.min(frames.len());
    if used < 2 {
        return Err(Error::ShortWindow(used));
    }
    let mut total = 0.0;
    for pair in frames[..used].windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.width() != b.width() || a.height() != b.height() {
            return Err(Error::InvalidPlane("frame sizes differ inside the window".into()));
        }
        let l1: u64 = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs() as u64)
            .sum();
        total += l1 as f64 / (a.width() * a.height()) as f64;
    }
    Ok(total / (used - 1) as f64)
}

/// One CSV row per CU.
pub fn write_cu_stats_csv<W: Write>(mut out: W, frames: &[FrameAnalysis]) -> Result<()> {
    writeln!(out, "frame,cu_x,cu_y,intra_cost,inter_cost,propagate_cost,mv_x,mv_y,delta_qp")?;
    for f in frames {
        for (i, cu) in f.cus.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{:.6},{},{},{:.6}",
                f.index,
                i % f.cols,
                i / f.cols,
                cu.intra_cost,
                cu.inter_cost,
                cu.propagate_cost,
                cu.mv.x,
                cu.mv.y,
                cu.delta_qp
            )?;
        }
    }
    Ok(())
}
