//! C ABI over the `cgrc` streaming rate controller and its metrics.
//!
//! Every fallible entry point returns a [`CgrcStatus`]; on failure the
//! message is available from [`cgrc_last_error`] on the same thread. Panics
//! never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cgrc::encoder_sim::{bd_rate, bitrate_error, RdPoint};
use cgrc::preanalysis::{satd_8x8, PreAnalysisConfig};
use cgrc::rate_control::{FrameDecision, RateControlConfig, Scheme};
use cgrc::rd_model::{lambda_from_qp, qp_from_lambda};
use cgrc::schedule::FrameType;
use cgrc::session::{Session, SessionConfig};
use cgrc::yuv_io::{FramePlane, VideoSpec};
use cgrc::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgrcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NeedMoreInput = 3,
    AwaitingReport = 4,
    Exhausted = 5,
    NotPending = 6,
    BufferTooSmall = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgrcScheme {
    Proposed = 0,
    NoConditionalQp = 1,
    EqualAllocation = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgrcFrameType {
    I = 0,
    P = 1,
    B = 2,
}

/// Session parameters; start from [`cgrc_session_params_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CgrcSessionParams {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: u32,
    /// Bits per second.
    pub target_bitrate: f64,
    pub gop_size: u32,
    /// 0 places a single I frame at the start.
    pub intra_period: u32,
    pub lookahead: u32,
    pub search_range: u32,
    pub cutree_strength: f64,
    pub epp_threshold: f64,
    pub qp_min: i32,
    pub qp_max: i32,
    pub scheme: CgrcScheme,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct CgrcFrameDecision {
    /// Display index.
    pub frame_index: u32,
    pub frame_type: u32,
    pub layer: u32,
    pub w: f64,
    pub lambda_g: f64,
    pub lambda: f64,
    pub base_qp: f64,
    pub final_qp: i32,
    pub target_bits: f64,
    pub epp: f64,
    pub avg_abs_delta_qp: f64,
    /// Number of CU offsets available from [`cgrc_session_cu_offsets`].
    pub cu_count: u32,
}

/// Opaque controller handle.
pub struct CgrcSession {
    inner: Session,
    last: Option<FrameDecision>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes = msg.into();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(bytes).expect("nul bytes removed"));
}

fn status_of(err: &Error) -> CgrcStatus {
    match err {
        Error::NeedMoreInput => CgrcStatus::NeedMoreInput,
        Error::AwaitingReport => CgrcStatus::AwaitingReport,
        Error::Exhausted => CgrcStatus::Exhausted,
        Error::NotPending(_) | Error::DoubleReport(_) => CgrcStatus::NotPending,
        Error::Config(_)
        | Error::InvalidSpec(_)
        | Error::InvalidPlane(_)
        | Error::OddDimensions { .. }
        | Error::NonPositive { .. }
        | Error::QpOutOfRange(_)
        | Error::DegenerateCurve(_) => CgrcStatus::InvalidArgument,
        _ => CgrcStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), CgrcStatus>) -> CgrcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CgrcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            CgrcStatus::Panic
        }
    }
}

fn fail(err: Error) -> CgrcStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> CgrcStatus {
    set_error(format!("{what} is null"));
    CgrcStatus::NullPointer
}

/// Message of the last failure on this thread; empty when none. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cgrc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be null or point to writable memory for one struct.
#[no_mangle]
pub unsafe extern "C" fn cgrc_session_params_default(out: *mut CgrcSessionParams) -> CgrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let rc = RateControlConfig::default();
        let pre = PreAnalysisConfig::default();
        *out = CgrcSessionParams {
            width: 0,
            height: 0,
            fps: 25.0,
            frame_count: 0,
            target_bitrate: rc.target_bitrate,
            gop_size: rc.gop_size as u32,
            intra_period: rc.intra_period as u32,
            lookahead: pre.lookahead_n as u32,
            search_range: pre.search_range as u32,
            cutree_strength: pre.cutree_strength,
            epp_threshold: rc.epp_threshold,
            qp_min: rc.qp_min,
            qp_max: rc.qp_max,
            scheme: CgrcScheme::Proposed,
        };
        Ok(())
    })
}

fn session_config(p: &CgrcSessionParams) -> SessionConfig {
    SessionConfig {
        video: VideoSpec {
            width: p.width as usize,
            height: p.height as usize,
            fps: p.fps,
            frame_count: p.frame_count as usize,
        },
        rc: RateControlConfig {
            target_bitrate: p.target_bitrate,
            gop_size: p.gop_size as usize,
            intra_period: p.intra_period as usize,
            epp_threshold: p.epp_threshold,
            qp_min: p.qp_min,
            qp_max: p.qp_max,
            ..RateControlConfig::default()
        },
        pre: PreAnalysisConfig {
            lookahead_n: p.lookahead as usize,
            search_range: p.search_range as usize,
            cutree_strength: p.cutree_strength,
            ..PreAnalysisConfig::default()
        },
        scheme: match p.scheme {
            CgrcScheme::Proposed => Scheme::Proposed,
            CgrcScheme::NoConditionalQp => Scheme::NoConditionalQp,
            CgrcScheme::EqualAllocation => Scheme::EqualAllocation,
        },
    }
}

/// Creates a session. On success `*out` owns a handle to release with
/// [`cgrc_session_free`].
///
/// # Safety
/// `params` must be null or point to a valid struct; `out` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cgrc_session_new(params: *const CgrcSessionParams, out: *mut *mut CgrcSession) -> CgrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        let inner = Session::new(session_config(params)).map_err(fail)?;
        *out = Box::into_raw(Box::new(CgrcSession { inner, last: None }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from [`cgrc_session_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn cgrc_session_free(session: *mut CgrcSession) {
    if !session.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(session))));
    }
}

/// Supplies the next picture's luma in display order. Rows are `stride`
/// bytes apart; `width` bytes of each are read.
///
/// # Safety
/// `luma` must point to `stride * height` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn cgrc_session_push_luma(session: *mut CgrcSession, luma: *const u8, stride: usize) -> CgrcStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        if luma.is_null() {
            return Err(null("luma"));
        }
        let spec = s.inner.config().video;
        if stride < spec.width {
            set_error(format!("stride {stride} is below the width {}", spec.width));
            return Err(CgrcStatus::InvalidArgument);
        }
        let src = std::slice::from_raw_parts(luma, stride * spec.height);
        let mut samples = Vec::with_capacity(spec.width * spec.height);
        for row in src.chunks_exact(stride) {
            samples.extend_from_slice(&row[..spec.width]);
        }
        let plane = FramePlane::new(spec.width, spec.height, samples).map_err(fail)?;
        s.inner.push_frame(&plane).map_err(fail)
    })
}

/// Decision for the next frame in coding order.
/// Returns `NeedMoreInput` until enough pictures have been pushed.
///
/// # Safety
/// `session` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cgrc_session_next_decision(session: *mut CgrcSession, out: *mut CgrcFrameDecision) -> CgrcStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = s.inner.next_decision().map_err(fail)?;
        *out = CgrcFrameDecision {
            frame_index: d.frame_index as u32,
            frame_type: match d.frame_type {
                FrameType::I => CgrcFrameType::I as u32,
                FrameType::P => CgrcFrameType::P as u32,
                FrameType::B => CgrcFrameType::B as u32,
            },
            layer: d.layer as u32,
            w: d.w,
            lambda_g: d.lambda_g,
            lambda: d.lambda,
            base_qp: d.base_qp,
            final_qp: d.final_qp,
            target_bits: d.target_bits,
            epp: d.epp,
            avg_abs_delta_qp: d.avg_abs_delta_qp,
            cu_count: d.cu_qp_offsets.len() as u32,
        };
        s.last = Some(d);
        Ok(())
    })
}

/// Copies the per-CU QP offsets of the pending decision (raster order on
/// the half-resolution 8x8 grid). `*written` receives the count.
///
/// # Safety
/// `out` must have room for `capacity` doubles; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cgrc_session_cu_offsets(
    session: *const CgrcSession,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> CgrcStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        *written = 0;
        let Some(d) = s.last.as_ref().filter(|_| s.inner.current_analysis().is_some()) else {
            set_error("no pending decision");
            return Err(CgrcStatus::NotPending);
        };
        let n = d.cu_qp_offsets.len();
        if capacity < n {
            set_error(format!("{n} offsets do not fit in {capacity}"));
            return Err(CgrcStatus::BufferTooSmall);
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(d.cu_qp_offsets.as_ptr(), out, n);
        *written = n;
        Ok(())
    })
}

/// Reports the coded size of the pending decision.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cgrc_session_report(session: *mut CgrcSession, actual_bits: u64) -> CgrcStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        s.inner.report(actual_bits).map_err(fail)?;
        s.last = None;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn cgrc_lambda_from_qp(qp: f64) -> f64 {
    lambda_from_qp(qp)
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cgrc_qp_from_lambda(lambda: f64, out: *mut f64) -> CgrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = qp_from_lambda(lambda).map_err(fail)?;
        Ok(())
    })
}

/// Bitrate error in permille.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cgrc_bitrate_error(target: f64, actual: f64, out: *mut f64) -> CgrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = bitrate_error(target, actual).map_err(fail)?;
        Ok(())
    })
}

unsafe fn curve(rates: *const f64, psnrs: *const f64, n: usize) -> Result<Vec<RdPoint>, CgrcStatus> {
    if rates.is_null() || psnrs.is_null() {
        return Err(null("curve"));
    }
    let r = std::slice::from_raw_parts(rates, n);
    let p = std::slice::from_raw_parts(psnrs, n);
    Ok(r.iter().zip(p).map(|(&r, &p)| RdPoint::new(r, p)).collect())
}

/// BD-rate of curve B against curve A, in percent.
///
/// # Safety
/// Each rate/PSNR array must hold the stated number of doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn cgrc_bd_rate(
    rates_a: *const f64,
    psnrs_a: *const f64,
    n_a: usize,
    rates_b: *const f64,
    psnrs_b: *const f64,
    n_b: usize,
    out: *mut f64,
) -> CgrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let a = curve(rates_a, psnrs_a, n_a)?;
        let b = curve(rates_b, psnrs_b, n_b)?;
        *out = bd_rate(&a, &b).map_err(fail)?;
        Ok(())
    })
}

/// SATD of two row-major 8x8 blocks.
///
/// # Safety
/// `a` and `b` must each point to 64 readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cgrc_satd_8x8(a: *const u8, b: *const u8, out: *mut u32) -> CgrcStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if a.is_null() || b.is_null() {
            return Err(null("block"));
        }
        let a: &[u8; 64] = &*(a as *const [u8; 64]);
        let b: &[u8; 64] = &*(b as *const [u8; 64]);
        *out = satd_8x8(a, b);
        Ok(())
    })
}
