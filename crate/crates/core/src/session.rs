//! Streaming driver: feed full-resolution luma in display order, pull one
//! decision at a time in coding order, report the coded size, repeat.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preanalysis::{
    compute_delta_qp, compute_epp, estimate_frame_costs, propagate_window, FrameAnalysis, PreAnalysisConfig, CU_SIZE,
};
use crate::rate_control::{FrameDecision, GopFrame, RateControlConfig, RateController, Scheme};
use crate::rd_model::ModelSet;
use crate::schedule::{build_schedule, FrameType, ScheduledFrame};
use crate::yuv_io::{downsample_half, FramePlane, VideoSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub video: VideoSpec,
    pub rc: RateControlConfig,
    pub pre: PreAnalysisConfig,
    pub scheme: Scheme,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.video.validate()?;
        self.rc.validate()?;
        self.pre.validate()?;
        if self.video.width < 2 * CU_SIZE || self.video.height < 2 * CU_SIZE {
            return Err(Error::InvalidSpec(format!("frames must be at least {0}x{0}", 2 * CU_SIZE)));
        }
        if self.pre.lookahead_n < self.rc.gop_size {
            return Err(Error::Config(format!(
                "lookahead_n ({}) must cover a rate-control GOP ({})",
                self.pre.lookahead_n, self.rc.gop_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct Session {
    cfg: SessionConfig,
    schedule: Vec<ScheduledFrame>,
    /// Lowest display index still needed once coding reaches each position.
    keep_from: Vec<usize>,
    lowres: Vec<Option<FramePlane>>,
    costs: Vec<Option<FrameAnalysis>>,
    pushed: usize,
    next: usize,
    controller: RateController,
    current: Option<FrameAnalysis>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let frames = cfg.video.frame_count;
        let schedule = build_schedule(frames, cfg.rc.intra_period, cfg.rc.gop_size)?;
        let mut keep_from = vec![usize::MAX; schedule.len() + 1];
        for p in (0..schedule.len()).rev() {
            let f = &schedule[p];
            let low = f.refs.iter().copied().chain([f.index]).min().unwrap_or(f.index);
            keep_from[p] = keep_from[p + 1].min(low);
        }
        let controller = RateController::new(cfg.rc, cfg.scheme, cfg.video.fps, frames, cfg.video.pixels())?;
        Ok(Self {
            schedule,
            keep_from,
            lowres: vec![None; frames],
            costs: vec![None; frames],
            pushed: 0,
            next: 0,
            controller,
            current: None,
            cfg,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Coding order.
    pub fn schedule(&self) -> &[ScheduledFrame] {
        &self.schedule
    }

    pub fn frames_pushed(&self) -> usize {
        self.pushed
    }

    /// Frames decided and reported so far.
    pub fn frames_coded(&self) -> usize {
        self.next
    }

    pub fn is_finished(&self) -> bool {
        self.next == self.schedule.len()
    }

    pub fn models(&self) -> &ModelSet {
        self.controller.models()
    }

    pub fn controller(&self) -> &RateController {
        &self.controller
    }

    /// Analysis of the frame awaiting its report, offsets included.
    pub fn current_analysis(&self) -> Option<&FrameAnalysis> {
        self.current.as_ref()
    }

    pub fn current_frame(&self) -> Option<&ScheduledFrame> {
        self.current.as_ref().map(|_| &self.schedule[self.next])
    }

    /// Appends the next picture in display order.
    pub fn push_frame(&mut self, luma: &FramePlane) -> Result<()> {
        if self.pushed == self.cfg.video.frame_count {
            return Err(Error::Config("every frame of the sequence was already supplied".into()));
        }
        if luma.width() != self.cfg.video.width || luma.height() != self.cfg.video.height {
            return Err(Error::InvalidPlane(format!(
                "expected {}x{}, got {}x{}",
                self.cfg.video.width,
                self.cfg.video.height,
                luma.width(),
                luma.height()
            )));
        }
        self.lowres[self.pushed] = Some(downsample_half(luma)?);
        self.pushed += 1;
        Ok(())
    }

    fn plane(&self, index: usize) -> Result<&FramePlane> {
        self.lowres
            .get(index)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::Schedule(format!("picture {index} is not available")))
    }

    fn ensure_costs(&mut self, pos: usize) -> Result<()> {
        if self.costs[pos].is_some() {
            return Ok(());
        }
        let f = &self.schedule[pos];
        let refs = f.refs.iter().map(|&r| Ok((r, self.plane(r)?))).collect::<Result<Vec<_>>>()?;
        let a = estimate_frame_costs(f.index, f.kind, self.plane(f.index)?, &refs, &self.cfg.pre)?;
        self.costs[pos] = Some(a);
        Ok(())
    }

    /// Decision for the next frame in coding order.
    ///
    /// Fails with [`Error::NeedMoreInput`] until the lookahead window of the
    /// frame has been pushed and with [`Error::AwaitingReport`] while the
    /// previous decision is unreported.
    pub fn next_decision(&mut self) -> Result<FrameDecision> {
        if self.current.is_some() {
            return Err(Error::AwaitingReport);
        }
        let p = self.next;
        if p >= self.schedule.len() {
            return Err(Error::Exhausted);
        }
        let n = self.cfg.pre.lookahead_n;
        let end = (p + n).min(self.schedule.len());
        let j = self.schedule[p].index;
        let epp_end = (j + n).min(self.cfg.video.frame_count);
        let needed = self.schedule[p..end]
            .iter()
            .flat_map(|f| f.refs.iter().copied().chain([f.index]))
            .chain([epp_end - 1])
            .max()
            .unwrap_or(0);
        if needed >= self.pushed {
            return Err(Error::NeedMoreInput);
        }

        for q in p..end {
            self.ensure_costs(q)?;
        }
        let window: Vec<&FrameAnalysis> = self.costs[p..end].iter().map(|c| c.as_ref().expect("filled")).collect();
        let acc = propagate_window(&window);
        let mut analyses: Vec<FrameAnalysis> = window.iter().zip(&acc).map(|(a, p)| a.with_propagate(p)).collect();

        let epp_planes = (j..epp_end).map(|i| self.plane(i)).collect::<Result<Vec<_>>>()?;
        let mut current = compute_delta_qp(&analyses[0], &self.cfg.pre);
        current.epp = if epp_planes.len() >= 2 { compute_epp(&epp_planes, n)? } else { 0.0 };
        analyses[0] = current.clone();

        let frame = self.schedule[p].clone();
        let decision = match frame.kind {
            FrameType::I => {
                let following: Vec<FrameAnalysis> =
                    analyses[1..].iter().filter(|a| a.kind != FrameType::I).cloned().collect();
                self.controller.decide_i(&current, &following)?
            }
            _ => {
                if frame.gop_pos == 0 {
                    let members: Vec<GopFrame> =
                        self.schedule.iter().filter(|f| f.gop == frame.gop).map(GopFrame::from).collect();
                    self.controller.begin_gop(members)?;
                }
                self.controller.decide_pb(frame.gop_pos, &analyses)?
            }
        };
        self.current = Some(current);
        Ok(decision)
    }

    /// Reports the coded size of the pending decision.
    pub fn report(&mut self, actual_bits: u64) -> Result<()> {
        if self.current.is_none() {
            let idx = self.schedule.get(self.next).map_or(usize::MAX, |f| f.index);
            return Err(Error::NotPending(idx));
        }
        let index = self.schedule[self.next].index;
        self.controller.report(index, actual_bits)?;
        self.current = None;
        self.costs[self.next] = None;
        self.next += 1;
        let keep = self.keep_from[self.next];
        for slot in self.lowres.iter_mut().take(keep.min(self.pushed)) {
            *slot = None;
        }
        Ok(())
    }
}
