//! Analytic encoder stand-in for closed-loop experiments.
//!
//! Each frame follows a hyperbolic R-D curve `D = C_eff·R^(-K)` with `R` in
//! bits per pixel and `D` as MSE. Better references lower the effective
//! complexity `C_eff`, which is what makes spending bits on referenced
//! pictures pay off later. The coded size solves the first-order condition
//! `λ = C_eff·K·R^(-K-1)` and carries a seeded lognormal disturbance.

mod metrics;
mod scenario;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rd_model::lambda_from_qp;

pub use metrics::{bd_rate, bitrate_error, RdPoint};
pub use scenario::{ContentParams, Scenario, SimParams, PRESET_NAMES};

pub const RD_EXPONENT_RANGE: (f64, f64) = (0.5, 2.5);
pub const NOISE_SIGMA_MAX: f64 = 0.3;
/// PSNR above which references stop improving, and the span of the ramp.
pub const BONUS_FLOOR_DB: f64 = 30.0;
pub const BONUS_SPAN_DB: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFrameModel {
    pub complexity: f64,
    pub rd_exponent: f64,
    pub dependence_gain: f64,
    pub noise_sigma: f64,
}

impl SimFrameModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.complexity > 0.0 && self.complexity.is_finite()) {
            return Err(Error::Config(format!("complexity must be positive, got {}", self.complexity)));
        }
        if !(RD_EXPONENT_RANGE.0..=RD_EXPONENT_RANGE.1).contains(&self.rd_exponent) {
            return Err(Error::Config(format!("rd_exponent {} outside [0.5, 2.5]", self.rd_exponent)));
        }
        if !(0.0..=1.0).contains(&self.dependence_gain) {
            return Err(Error::Config(format!("dependence_gain {} outside [0, 1]", self.dependence_gain)));
        }
        if !(0.0..=NOISE_SIGMA_MAX).contains(&self.noise_sigma) {
            return Err(Error::Config(format!("noise_sigma {} outside [0, 0.3]", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub bits: u64,
    pub distortion: f64,
    pub psnr: f64,
}

/// Per-pixel encode at an integer QP: `bits` is the rate in bits per pixel,
/// rounded and at least 1.
pub fn simulate_encode(model: &SimFrameModel, qp: i32, ref_quality_bonus: f64, rng_seed: u64) -> Result<SimResult> {
    simulate_frame(model, qp as f64, ref_quality_bonus, rng_seed, 1)
}

/// Encodes a picture of `pixels` samples at a possibly fractional QP (the
/// frame QP plus the mean CU offset).
pub fn simulate_frame(
    model: &SimFrameModel,
    qp: f64,
    ref_quality_bonus: f64,
    rng_seed: u64,
    pixels: u64,
) -> Result<SimResult> {
    model.validate()?;
    if !(0.0..=51.0).contains(&qp) {
        return Err(Error::QpOutOfRange(qp));
    }
    if !(0.0..=1.0).contains(&ref_quality_bonus) {
        return Err(Error::Config(format!("ref_quality_bonus {ref_quality_bonus} outside [0, 1]")));
    }
    if pixels == 0 {
        return Err(Error::Config("pixel count must be positive".into()));
    }
    let lambda = lambda_from_qp(qp);
    let k = model.rd_exponent;
    let c_eff = model.complexity * (1.0 - model.dependence_gain * ref_quality_bonus);
    let rate = (c_eff * k / lambda).powf(1.0 / (k + 1.0));
    let noise = if model.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let normal = Normal::new(0.0, model.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        normal.sample(&mut rng).exp()
    } else {
        1.0
    };
    let bits = (rate * pixels as f64 * noise).round().max(1.0) as u64;
    let distortion = c_eff * rate.powf(-k);
    Ok(SimResult { bits, distortion, psnr: psnr_from_mse(distortion) })
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    10.0 * (255.0f64 * 255.0 / mse).log10()
}

/// `clamp(mean reference PSNR − 30 dB, 0, 10) / 10`; zero without references.
pub fn ref_quality_bonus(ref_psnrs: &[f64]) -> f64 {
    if ref_psnrs.is_empty() {
        return 0.0;
    }
    let mean = ref_psnrs.iter().sum::<f64>() / ref_psnrs.len() as f64;
    (mean - BONUS_FLOOR_DB).clamp(0.0, BONUS_SPAN_DB) / BONUS_SPAN_DB
}

/// Seed for the disturbance of one frame of one run.
pub fn frame_seed(run_seed: u64, frame_index: usize) -> u64 {
    let mut z = run_seed ^ (frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rd_model::qp_from_lambda;
    use proptest::prelude::*;

    fn model(c: f64, k: f64, g: f64, sigma: f64) -> SimFrameModel {
        SimFrameModel { complexity: c, rd_exponent: k, dependence_gain: g, noise_sigma: sigma }
    }

    #[test]
    fn closed_form_rate() {
        let qp = qp_from_lambda(10.0).unwrap();
        let r = simulate_frame(&model(1000.0, 1.0, 0.0, 0.0), qp, 0.0, 7, 1).unwrap();
        assert_eq!(r.bits, 10);
        assert!((r.distortion - 100.0).abs() < 1e-9);
        assert!((r.psnr - 10.0 * (65025.0f64 / 100.0).log10()).abs() < 1e-12);
    }

    #[test]
    fn higher_qp_costs_quality() {
        let m = model(50.0, 1.0, 0.0, 0.0);
        let lo = simulate_encode(&m, 22, 0.0, 1).unwrap();
        let hi = simulate_encode(&m, 51, 0.0, 1).unwrap();
        assert!(hi.bits < lo.bits);
        assert!(hi.distortion > lo.distortion);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let m = model(5.0, 0.8, 0.5, 0.2);
        let a = simulate_frame(&m, 30.0, 0.4, 99, 10_000).unwrap();
        assert_eq!(a, simulate_frame(&m, 30.0, 0.4, 99, 10_000).unwrap());
        assert_ne!(a.bits, simulate_frame(&m, 30.0, 0.4, 100, 10_000).unwrap().bits);
        let quiet = simulate_frame(&model(5.0, 0.8, 0.5, 0.0), 30.0, 0.4, 99, 10_000).unwrap();
        assert_eq!(a.distortion, quiet.distortion);
    }

    #[test]
    fn argument_checks() {
        let m = model(5.0, 1.0, 0.5, 0.0);
        assert!(matches!(simulate_encode(&m, 52, 0.0, 0), Err(Error::QpOutOfRange(_))));
        assert!(matches!(simulate_encode(&m, -1, 0.0, 0), Err(Error::QpOutOfRange(_))));
        assert!(simulate_encode(&m, 30, 1.5, 0).is_err());
        assert!(simulate_encode(&model(0.0, 1.0, 0.0, 0.0), 30, 0.0, 0).is_err());
        assert!(simulate_encode(&model(1.0, 3.0, 0.0, 0.0), 30, 0.0, 0).is_err());
        assert!(simulate_encode(&model(1.0, 1.0, 0.0, 0.5), 30, 0.0, 0).is_err());
    }

    #[test]
    fn bonus_mapping() {
        assert_eq!(ref_quality_bonus(&[]), 0.0);
        assert_eq!(ref_quality_bonus(&[25.0]), 0.0);
        assert_eq!(ref_quality_bonus(&[35.0]), 0.5);
        assert_eq!(ref_quality_bonus(&[34.0, 38.0]), 0.6);
        assert_eq!(ref_quality_bonus(&[60.0]), 1.0);
    }

    #[test]
    fn bits_are_at_least_one() {
        let r = simulate_encode(&model(1e-3, 2.5, 0.0, 0.0), 51, 0.0, 0).unwrap();
        assert_eq!(r.bits, 1);
    }

    proptest! {
        #[test]
        fn monotone_in_qp(c in 0.1f64..100.0, k in 0.5f64..2.5, g in 0.0f64..1.0, b in 0.0f64..1.0, qp in 0.0f64..50.0) {
            let m = model(c, k, g, 0.0);
            let lo = simulate_frame(&m, qp, b, 0, 1_000_000).unwrap();
            let hi = simulate_frame(&m, qp + 0.5, b, 0, 1_000_000).unwrap();
            prop_assert!(hi.distortion > lo.distortion);
            prop_assert!(hi.bits <= lo.bits);
        }

        #[test]
        fn better_references_save_bits(c in 0.1f64..100.0, k in 0.5f64..2.5, g in 0.05f64..1.0,
                                       b in 0.0f64..0.9, qp in 0.0f64..51.0) {
            let m = model(c, k, g, 0.0);
            let worse = simulate_frame(&m, qp, b, 0, 1 << 40).unwrap();
            let better = simulate_frame(&m, qp, b + 0.1, 0, 1 << 40).unwrap();
            prop_assert!(better.bits < worse.bits);
        }

        #[test]
        fn psnr_matches_distortion(c in 0.1f64..100.0, qp in 0i32..=51, sigma in 0.0f64..0.3, seed in any::<u64>()) {
            let r = simulate_encode(&model(c, 1.0, 0.0, sigma), qp, 0.0, seed).unwrap();
            prop_assert!(r.bits >= 1 && r.distortion > 0.0);
            prop_assert!((r.psnr - 10.0 * (65025.0 / r.distortion).log10()).abs() < 1e-9);
        }
    }
}
