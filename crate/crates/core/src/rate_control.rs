//! Frame-level λ-domain rate control guided by the lookahead costs.
//!
//! P/B frames share one GOP multiplier `λ_g`; each frame's multiplier is
//! `w_layer·λ_g` where the layer weight comes from the propagate/intra cost
//! ratio of the frame. `λ_g` is the root of
//! `Σ_i (w_i·λ_g/α_i)^(1/β_i) = R_gopleft` over the frames still to code.
//! I frames are budgeted on their own. When the lookahead content changes
//! quickly (`epp ≥ T`), referenced frames get their QP raised by the mean
//! magnitude of their CU offsets.

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};
use crate::preanalysis::FrameAnalysis;
use crate::rd_model::{lambda_from_qp, qp_from_lambda, ModelContext, ModelSet, RdModel};
use crate::schedule::{FrameType, ScheduledFrame};

pub const LAYER2_WEIGHT: f64 = 1.0 / 1.2599;
/// Layer weights used before any QP history exists.
pub const STARTUP_WEIGHTS: [f64; 3] = [0.25, LAYER2_WEIGHT, 1.0];
pub const K_RANGE: (f64, f64) = (0.0, 50.0);
pub const QP_LAST_MIN: f64 = 2.0;
pub const LAMBDA_BRACKET: (f64, f64) = (1e-6, 1e6);
pub const BISECTION_TOLERANCE: f64 = 1e-4;
pub const BISECTION_MAX_ITER: usize = 100;
pub const I_BOOST_RANGE: (f64, f64) = (1.0, 8.0);
/// Per-frame budgets never drop below this share of the nominal rate.
pub const MIN_BUDGET_FRACTION: f64 = 0.1;
/// Lower bound on the intra SATD per pixel used to normalize I-frame rates.
pub const MIN_SATD_PER_PIXEL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Cost-guided layer weights and conditional QP increase.
    #[default]
    Proposed,
    /// Layer weights only.
    NoConditionalQp,
    /// Every weight is 1 and no conditional increase.
    EqualAllocation,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::NoConditionalQp, Scheme::EqualAllocation];

    pub fn conditional_qp(self) -> bool {
        self == Scheme::Proposed
    }

    pub fn cost_weights(self) -> bool {
        self != Scheme::EqualAllocation
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::NoConditionalQp => "no-conditional-qp",
            Scheme::EqualAllocation => "equal-allocation",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateControlConfig {
    /// Bits per second.
    pub target_bitrate: f64,
    /// Coded P/B frames per rate-control GOP.
    pub gop_size: usize,
    /// Threshold on `epp` above which the conditional increase applies.
    pub epp_threshold: f64,
    /// Constant `c` in the layer-1 weight.
    pub k_constant: f64,
    /// Frames over which an over- or under-spend is paid back.
    pub smoothing_window: usize,
    pub qp_min: i32,
    pub qp_max: i32,
    /// Distance between I frames; 0 keeps only the first.
    pub intra_period: usize,
    pub lr_alpha: f64,
    pub lr_beta: f64,
}

impl Default for RateControlConfig {
    fn default() -> Self {
        Self {
            target_bitrate: 1_000_000.0,
            gop_size: 8,
            epp_threshold: 2.5,
            k_constant: 4791.5,
            smoothing_window: 40,
            qp_min: 0,
            qp_max: 51,
            intra_period: 0,
            lr_alpha: 0.1,
            lr_beta: 0.05,
        }
    }
}

impl RateControlConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.target_bitrate > 0.0 && self.target_bitrate.is_finite()) {
            return fail("target_bitrate must be positive");
        }
        if self.gop_size < 1 {
            return fail("gop_size must be at least 1");
        }
        if !(self.epp_threshold > 0.0) {
            return fail("epp_threshold must be positive");
        }
        if !(self.k_constant > 0.0) {
            return fail("k_constant must be positive");
        }
        if self.smoothing_window < 1 {
            return fail("smoothing_window must be at least 1");
        }
        if self.qp_min > self.qp_max || self.qp_min < 0 || self.qp_max > 51 {
            return fail("need 0 <= qp_min <= qp_max <= 51");
        }
        if !(self.lr_alpha > 0.0 && self.lr_alpha < 1.0 && self.lr_beta > 0.0 && self.lr_beta < 1.0) {
            return fail("learning rates must lie in (0, 1)");
        }
        Ok(())
    }

    /// λ range corresponding to `[qp_min, qp_max]`.
    pub fn lambda_range(&self) -> (f64, f64) {
        (lambda_from_qp(self.qp_min as f64), lambda_from_qp(self.qp_max as f64))
    }
}

pub fn round_half_up(x: f64) -> i32 {
    (x + 0.5).floor() as i32
}

/// Sequence-wide bit accounting with deficit amortization.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetTracker {
    nominal: f64,
    frames_total: usize,
    frames_coded: usize,
    bits_spent: f64,
    window: usize,
}

impl BudgetTracker {
    pub fn new(cfg: &RateControlConfig, fps: f64, frames_total: usize) -> Result<Self> {
        let fps = positive("fps", fps)?;
        Ok(Self {
            nominal: cfg.target_bitrate / fps,
            frames_total,
            frames_coded: 0,
            bits_spent: 0.0,
            window: cfg.smoothing_window.max(1),
        })
    }

    pub fn nominal_frame_bits(&self) -> f64 {
        self.nominal
    }

    pub fn frames_remaining(&self) -> usize {
        self.frames_total.saturating_sub(self.frames_coded)
    }

    pub fn bits_spent(&self) -> f64 {
        self.bits_spent
    }

    /// Spent minus the nominal allowance of the frames coded so far.
    pub fn deficit(&self) -> f64 {
        self.bits_spent - self.nominal * self.frames_coded as f64
    }

    /// Nominal frame budget minus the deficit spread over the smoothing
    /// window (or over the frames left, when fewer remain).
    pub fn per_frame_budget(&self) -> Result<f64> {
        let remaining = self.frames_remaining();
        if remaining == 0 {
            return Err(Error::Exhausted);
        }
        let spread = remaining.min(self.window) as f64;
        let budget = self.nominal - self.deficit() / spread;
        Ok(budget.max(self.nominal * MIN_BUDGET_FRACTION))
    }

    pub fn record(&mut self, bits: f64) {
        self.bits_spent += bits;
        self.frames_coded += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GopFrame {
    pub index: usize,
    pub kind: FrameType,
    pub layer: u8,
    pub pos: usize,
}

impl From<&ScheduledFrame> for GopFrame {
    fn from(f: &ScheduledFrame) -> Self {
        Self { index: f.index, kind: f.kind, layer: f.layer, pos: f.gop_pos }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GopState {
    pub gop_bits_left: f64,
    pub frames_left: usize,
    /// Frames in coding order.
    pub frames: Vec<GopFrame>,
    /// QP of the co-located frame in the previous GOP, by GOP position.
    pub last_gop_qps: Vec<Option<i32>>,
    pub lambda_g: f64,
    /// Per-frame budget at planning time; also bounds the budget from below.
    pub frame_budget: f64,
    coded: Vec<bool>,
}

impl GopState {
    pub fn is_coded(&self, pos: usize) -> bool {
        self.coded.get(pos).copied().unwrap_or(false)
    }
}

/// Opens a GOP with `frames.len() × per-frame budget` bits.
pub fn plan_gop(tracker: &BudgetTracker, frames: Vec<GopFrame>, last_gop_qps: &[Option<i32>]) -> Result<GopState> {
    if frames.is_empty() {
        return Err(Error::Config("a GOP needs at least one frame".into()));
    }
    let frame_budget = tracker.per_frame_budget()?;
    let n = frames.len();
    let mut qps = last_gop_qps.to_vec();
    let longest = frames.iter().map(|f| f.pos + 1).max().unwrap_or(0);
    if qps.len() < longest {
        qps.resize(longest, None);
    }
    Ok(GopState {
        gop_bits_left: frame_budget * n as f64,
        frames_left: n,
        frames,
        last_gop_qps: qps,
        lambda_g: f64::NAN,
        frame_budget,
        coded: vec![false; n],
    })
}

/// `k = (avg propagate / avg intra)·QP_last²/c·ln QP_last`, clamped.
pub fn k_factor(avg_propagate: f64, avg_intra: f64, qp_last: f64, c: f64) -> f64 {
    if avg_intra <= 0.0 {
        return 0.0;
    }
    let q = qp_last.max(QP_LAST_MIN);
    let k = avg_propagate / avg_intra * (q * q / c) * q.ln();
    k.clamp(K_RANGE.0, K_RANGE.1)
}

/// Weight `w_layer` scaling the GOP multiplier for a frame of `layer`.
/// Layer 1 needs the frame's analysis and the co-located QP of the last GOP.
pub fn layer_weight(
    layer: u8,
    analysis: Option<&FrameAnalysis>,
    qp_last: Option<f64>,
    cfg: &RateControlConfig,
) -> Result<f64> {
    match layer {
        3 => Ok(1.0),
        2 => Ok(LAYER2_WEIGHT),
        1 => {
            let (a, q) = analysis.zip(qp_last).ok_or_else(|| {
                Error::Config("layer-1 weight needs the frame analysis and QP_last".into())
            })?;
            let k = k_factor(a.avg_propagate_cost, a.avg_intra_cost, q, cfg.k_constant);
            Ok(1.0 / (1.0 + k))
        }
        other => Err(Error::InvalidLayer(other)),
    }
}

pub fn startup_weight(layer: u8) -> Result<f64> {
    match layer {
        1..=3 => Ok(STARTUP_WEIGHTS[layer as usize - 1]),
        other => Err(Error::InvalidLayer(other)),
    }
}

/// One remaining frame's contribution to the GOP rate equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateTerm {
    pub weight: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl RateTerm {
    pub fn new(weight: f64, model: &RdModel) -> Self {
        Self { weight, alpha: model.alpha, beta: model.beta }
    }

    /// Rate (bpp) this frame gets at the GOP multiplier `lambda_g`.
    pub fn rate(&self, lambda_g: f64) -> f64 {
        (self.weight * lambda_g / self.alpha).powf(1.0 / self.beta)
    }
}

pub fn total_rate(terms: &[RateTerm], lambda_g: f64) -> f64 {
    terms.iter().map(|t| t.rate(lambda_g)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaSolution {
    pub lambda: f64,
    /// The budget lies outside what the bracket can reach.
    pub saturated: bool,
    pub iterations: usize,
}

/// Log-domain bisection for the GOP multiplier.
pub fn solve_lambda_g(terms: &[RateTerm], budget_bpp: f64) -> Result<LambdaSolution> {
    if terms.is_empty() {
        return Err(Error::Config("no frames left in the GOP".into()));
    }
    let budget = positive("GOP budget", budget_bpp)?;
    for t in terms {
        positive("layer weight", t.weight)?;
        positive("alpha", t.alpha)?;
        if !(t.beta < 0.0) {
            return Err(Error::Config(format!("beta must be negative, got {}", t.beta)));
        }
    }

    let (mut lo, mut hi) = (LAMBDA_BRACKET.0.ln(), LAMBDA_BRACKET.1.ln());
    // The rate sum falls as λ grows.
    if total_rate(terms, LAMBDA_BRACKET.0) <= budget {
        return Ok(LambdaSolution { lambda: LAMBDA_BRACKET.0, saturated: true, iterations: 0 });
    }
    if total_rate(terms, LAMBDA_BRACKET.1) >= budget {
        return Ok(LambdaSolution { lambda: LAMBDA_BRACKET.1, saturated: true, iterations: 0 });
    }
    let mut mid = 0.5 * (lo + hi);
    for iter in 1..=BISECTION_MAX_ITER {
        mid = 0.5 * (lo + hi);
        let sum = total_rate(terms, mid.exp());
        if (sum - budget).abs() <= BISECTION_TOLERANCE * budget {
            return Ok(LambdaSolution { lambda: mid.exp(), saturated: false, iterations: iter });
        }
        if sum > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LambdaSolution { lambda: mid.exp(), saturated: false, iterations: BISECTION_MAX_ITER })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameDecision {
    pub frame_index: usize,
    pub frame_type: FrameType,
    pub layer: u8,
    /// Position in the rate-control GOP; `None` for I frames.
    pub gop_pos: Option<usize>,
    pub w: f64,
    pub lambda_g: f64,
    pub lambda: f64,
    pub base_qp: f64,
    pub final_qp: i32,
    pub target_bits: f64,
    pub cu_qp_offsets: Vec<f64>,
    pub epp: f64,
    pub avg_abs_delta_qp: f64,
    /// Divisor applied to bpp before the model update (intra SATD per
    /// pixel for I frames, 1 otherwise).
    pub rate_norm: f64,
    pub saturated: bool,
}

impl FrameDecision {
    pub fn context(&self) -> ModelContext {
        ModelContext::of(self.frame_type, self.layer)
    }

    pub fn mean_cu_offset(&self) -> f64 {
        if self.cu_qp_offsets.is_empty() {
            0.0
        } else {
            self.cu_qp_offsets.iter().sum::<f64>() / self.cu_qp_offsets.len() as f64
        }
    }

    /// Average QP the encoder applies once the CU offsets are added.
    pub fn average_qp(&self) -> f64 {
        self.final_qp as f64 + self.mean_cu_offset()
    }
}

fn final_qp(base_qp: f64, analysis: &FrameAnalysis, layer: u8, scheme: Scheme, cfg: &RateControlConfig) -> i32 {
    let raise = scheme.conditional_qp() && layer != 3 && analysis.epp >= cfg.epp_threshold;
    let qp = if raise { base_qp + analysis.avg_abs_delta_qp } else { base_qp };
    round_half_up(qp).clamp(cfg.qp_min, cfg.qp_max)
}

fn clamp_lambda(lambda: f64, cfg: &RateControlConfig) -> f64 {
    let (lo, hi) = cfg.lambda_range();
    lambda.clamp(lo, hi)
}

/// Decision for the P/B frame at GOP position `pos`.
///
/// `analyses` must cover this frame and every frame of the GOP coded after
/// it. Positions without QP history use the startup weights.
pub fn decide_pb_frame(
    pos: usize,
    gop: &GopState,
    analyses: &[FrameAnalysis],
    models: &ModelSet,
    cfg: &RateControlConfig,
    scheme: Scheme,
    pixels: u64,
) -> Result<FrameDecision> {
    let start = gop
        .frames
        .iter()
        .position(|f| f.pos == pos)
        .ok_or_else(|| Error::Config(format!("GOP has no position {pos}")))?;
    let remaining: Vec<&GopFrame> = gop.frames[start..].iter().filter(|f| !gop.is_coded(f.pos)).collect();
    if remaining.first().map(|f| f.pos) != Some(pos) {
        return Err(Error::DoubleReport(gop.frames[start].index));
    }
    let find = |index: usize| analyses.iter().find(|a| a.index == index).ok_or(Error::MissingAnalysis(index));

    let mut terms = Vec::with_capacity(remaining.len());
    for f in &remaining {
        let a = find(f.index)?;
        let w = if !scheme.cost_weights() {
            1.0
        } else {
            match (f.layer, gop.last_gop_qps.get(f.pos).copied().flatten()) {
                (1, Some(q)) => layer_weight(1, Some(a), Some(q as f64), cfg)?,
                (1, None) => startup_weight(1)?,
                (l, _) => layer_weight(l, None, None, cfg)?,
            }
        };
        terms.push(RateTerm::new(w, models.get(ModelContext::of(f.kind, f.layer))));
    }

    let pixels_f = pixels as f64;
    let floor = gop.frame_budget * MIN_BUDGET_FRACTION * remaining.len() as f64;
    let budget_bpp = gop.gop_bits_left.max(floor) / pixels_f;
    let solution = solve_lambda_g(&terms, budget_bpp)?;

    let this = remaining[0];
    let analysis = find(this.index)?;
    let term = terms[0];
    let lambda = clamp_lambda(term.weight * solution.lambda, cfg);
    let base_qp = qp_from_lambda(lambda)?;
    let model = models.get(ModelContext::of(this.kind, this.layer));
    Ok(FrameDecision {
        frame_index: this.index,
        frame_type: this.kind,
        layer: this.layer,
        gop_pos: Some(this.pos),
        w: term.weight,
        lambda_g: solution.lambda,
        lambda,
        base_qp,
        final_qp: final_qp(base_qp, analysis, this.layer, scheme, cfg),
        target_bits: model.rate_from_lambda(lambda)? * pixels_f,
        cu_qp_offsets: analysis.cu_qp_offsets(),
        epp: analysis.epp,
        avg_abs_delta_qp: analysis.avg_abs_delta_qp,
        rate_norm: 1.0,
        saturated: solution.saturated,
    })
}

/// Decision for an I frame budgeted as a one-frame GOP.
///
/// The budget is the per-frame budget scaled by the ratio of the picture's
/// intra SATD to the mean coded cost of the `following` lookahead frames.
pub fn decide_i_frame(
    analysis: &FrameAnalysis,
    following: &[FrameAnalysis],
    models: &ModelSet,
    cfg: &RateControlConfig,
    scheme: Scheme,
    frame_budget: f64,
    pixels: u64,
) -> Result<FrameDecision> {
    if analysis.kind != FrameType::I {
        return Err(Error::Schedule(format!("frame {} is not an I frame", analysis.index)));
    }
    let frame_budget = positive("frame budget", frame_budget)?;
    let intra = analysis.total_intra_cost();
    let boost = if following.is_empty() {
        I_BOOST_RANGE.0
    } else {
        let avg = following.iter().map(FrameAnalysis::total_inter_cost).sum::<f64>() / following.len() as f64;
        if avg > 0.0 {
            (intra / avg).clamp(I_BOOST_RANGE.0, I_BOOST_RANGE.1)
        } else if intra > 0.0 {
            I_BOOST_RANGE.1
        } else {
            I_BOOST_RANGE.0
        }
    };
    let target_bits = frame_budget * boost;
    let bpp = target_bits / pixels as f64;
    let satd_per_pixel = (intra / (analysis.width * analysis.height) as f64).max(MIN_SATD_PER_PIXEL);

    let model = models.get(ModelContext::Intra);
    let lambda = clamp_lambda(model.lambda_from_rate(bpp / satd_per_pixel)?, cfg);
    let base_qp = qp_from_lambda(lambda)?;
    Ok(FrameDecision {
        frame_index: analysis.index,
        frame_type: FrameType::I,
        layer: 0,
        gop_pos: None,
        w: 1.0,
        lambda_g: lambda,
        lambda,
        base_qp,
        final_qp: final_qp(base_qp, analysis, 0, scheme, cfg),
        target_bits,
        cu_qp_offsets: analysis.cu_qp_offsets(),
        epp: analysis.epp,
        avg_abs_delta_qp: analysis.avg_abs_delta_qp,
        rate_norm: satd_per_pixel,
        saturated: false,
    })
}

/// Books the coded size of a P/B frame into its GOP and updates the
/// frame's context model with the observed rate and the λ of the frame QP.
pub fn on_frame_encoded(
    decision: &FrameDecision,
    actual_bits: u64,
    gop: &mut GopState,
    models: &mut ModelSet,
    pixels: u64,
) -> Result<()> {
    let pos = decision
        .gop_pos
        .ok_or_else(|| Error::Schedule(format!("frame {} is not part of a GOP", decision.frame_index)))?;
    if actual_bits == 0 {
        return Err(Error::NonPositive { what: "actual bits", value: 0.0 });
    }
    let slot = gop
        .frames
        .iter()
        .position(|f| f.pos == pos && f.index == decision.frame_index)
        .ok_or(Error::NotPending(decision.frame_index))?;
    if gop.coded[slot] {
        return Err(Error::DoubleReport(decision.frame_index));
    }
    update_model(decision, actual_bits, models, pixels)?;
    gop.coded[slot] = true;
    gop.gop_bits_left -= actual_bits as f64;
    gop.frames_left -= 1;
    gop.last_gop_qps[pos] = Some(decision.final_qp);
    gop.lambda_g = decision.lambda_g;
    Ok(())
}

fn update_model(decision: &FrameDecision, actual_bits: u64, models: &mut ModelSet, pixels: u64) -> Result<()> {
    let bpp = actual_bits as f64 / pixels as f64 / decision.rate_norm;
    let lambda = lambda_from_qp(decision.final_qp as f64);
    let ctx = decision.context();
    let updated = models.get(ctx).update(bpp, lambda)?;
    *models.get_mut(ctx) = updated;
    Ok(())
}

/// Sequential decide → encode → report state machine over a schedule.
#[derive(Clone, Debug)]
pub struct RateController {
    cfg: RateControlConfig,
    scheme: Scheme,
    pixels: u64,
    tracker: BudgetTracker,
    models: ModelSet,
    qp_last: Vec<Option<i32>>,
    gop: Option<GopState>,
    pending: Option<FrameDecision>,
}

impl RateController {
    pub fn new(cfg: RateControlConfig, scheme: Scheme, fps: f64, frames_total: usize, pixels: u64) -> Result<Self> {
        cfg.validate()?;
        if pixels == 0 {
            return Err(Error::Config("pixel count must be positive".into()));
        }
        Ok(Self {
            tracker: BudgetTracker::new(&cfg, fps, frames_total)?,
            models: ModelSet::with_learning_rates(cfg.lr_alpha, cfg.lr_beta),
            qp_last: vec![None; cfg.gop_size],
            gop: None,
            pending: None,
            cfg,
            scheme,
            pixels,
        })
    }

    pub fn config(&self) -> &RateControlConfig {
        &self.cfg
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn tracker(&self) -> &BudgetTracker {
        &self.tracker
    }

    pub fn gop(&self) -> Option<&GopState> {
        self.gop.as_ref()
    }

    pub fn pending(&self) -> Option<&FrameDecision> {
        self.pending.as_ref()
    }

    /// Opens the next GOP; the previous one's QP history carries over.
    pub fn begin_gop(&mut self, frames: Vec<GopFrame>) -> Result<()> {
        self.ensure_idle()?;
        if let Some(prev) = self.gop.take() {
            merge_qps(&mut self.qp_last, &prev.last_gop_qps);
        }
        self.gop = Some(plan_gop(&self.tracker, frames, &self.qp_last)?);
        Ok(())
    }

    pub fn decide_pb(&mut self, pos: usize, analyses: &[FrameAnalysis]) -> Result<FrameDecision> {
        self.ensure_idle()?;
        let gop = self.gop.as_ref().ok_or_else(|| Error::Config("no open GOP".into()))?;
        let d = decide_pb_frame(pos, gop, analyses, &self.models, &self.cfg, self.scheme, self.pixels)?;
        self.pending = Some(d.clone());
        Ok(d)
    }

    pub fn decide_i(&mut self, analysis: &FrameAnalysis, following: &[FrameAnalysis]) -> Result<FrameDecision> {
        self.ensure_idle()?;
        let budget = self.tracker.per_frame_budget()?;
        let d = decide_i_frame(analysis, following, &self.models, &self.cfg, self.scheme, budget, self.pixels)?;
        self.pending = Some(d.clone());
        Ok(d)
    }

    /// Reports the coded size of the pending decision.
    pub fn report(&mut self, frame_index: usize, actual_bits: u64) -> Result<()> {
        let decision = match &self.pending {
            Some(d) if d.frame_index == frame_index => d.clone(),
            _ => return Err(Error::NotPending(frame_index)),
        };
        match decision.frame_type {
            FrameType::I => {
                if actual_bits == 0 {
                    return Err(Error::NonPositive { what: "actual bits", value: 0.0 });
                }
                update_model(&decision, actual_bits, &mut self.models, self.pixels)?;
            }
            _ => {
                let gop = self.gop.as_mut().ok_or_else(|| Error::Config("no open GOP".into()))?;
                on_frame_encoded(&decision, actual_bits, gop, &mut self.models, self.pixels)?;
            }
        }
        self.tracker.record(actual_bits as f64);
        self.pending = None;
        Ok(())
    }

    fn ensure_idle(&self) -> Result<()> {
        if self.pending.is_some() {
            Err(Error::AwaitingReport)
        } else {
            Ok(())
        }
    }
}

fn merge_qps(table: &mut Vec<Option<i32>>, latest: &[Option<i32>]) {
    if table.len() < latest.len() {
        table.resize(latest.len(), None);
    }
    for (slot, q) in table.iter_mut().zip(latest) {
        if q.is_some() {
            *slot = *q;
        }
    }
}
