//! Lookahead-guided λ-domain rate control for hierarchical-B video coding.
//!
//! The crate reads raw luma, runs a half-resolution pre-analysis that
//! estimates per-CU intra/inter costs and back-propagates inherited
//! information, derives frame-level multipliers and QPs from a per-layer R-λ
//! model, and drives an analytic encoder stand-in for closed-loop experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod encoder_sim;
pub mod error;
pub mod preanalysis;
pub mod rate_control;
pub mod rd_model;
pub mod schedule;
pub mod session;
pub mod yuv_io;

pub use error::{Error, Result};
