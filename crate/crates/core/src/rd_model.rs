//! R-λ model `λ = α·R^β` with `R` in bits per pixel, the QP↔λ mapping and
//! the post-encode parameter update.

use serde::{Deserialize, Serialize};

use crate::error::{positive, Result};
use crate::schedule::FrameType;

pub const QP_LAMBDA_SLOPE: f64 = 4.2005;
pub const QP_LAMBDA_OFFSET: f64 = 13.7122;

pub const ALPHA_RANGE: (f64, f64) = (1e-4, 1e4);
pub const BETA_RANGE: (f64, f64) = (-3.0, -0.01);
/// Bound on `ln R` inside the β update.
pub const LN_RATE_CLAMP: f64 = 5.0;

/// `QP = 4.2005·ln λ + 13.7122`, unclamped.
pub fn qp_from_lambda(lambda: f64) -> Result<f64> {
    let lambda = positive("lambda", lambda)?;
    Ok(QP_LAMBDA_SLOPE * lambda.ln() + QP_LAMBDA_OFFSET)
}

pub fn lambda_from_qp(qp: f64) -> f64 {
    ((qp - QP_LAMBDA_OFFSET) / QP_LAMBDA_SLOPE).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdModel {
    pub alpha: f64,
    pub beta: f64,
    pub lr_alpha: f64,
    pub lr_beta: f64,
}

impl Default for RdModel {
    fn default() -> Self {
        Self { alpha: 3.2003, beta: -1.367, lr_alpha: 0.1, lr_beta: 0.05 }
    }
}

impl RdModel {
    /// Starting point for I frames, where the rate is normalized by the
    /// picture's intra SATD per pixel: `λ = 6.7542·(SATD/R)^1.786`.
    pub fn intra() -> Self {
        Self { alpha: 6.7542, beta: -1.7860, ..Self::default() }
    }

    pub fn lambda_from_rate(&self, bpp: f64) -> Result<f64> {
        let bpp = positive("bpp", bpp)?;
        Ok(self.alpha * bpp.powf(self.beta))
    }

    /// Inverse of [`Self::lambda_from_rate`].
    pub fn rate_from_lambda(&self, lambda: f64) -> Result<f64> {
        let lambda = positive("lambda", lambda)?;
        Ok((lambda / self.alpha).powf(1.0 / self.beta))
    }

    /// `ln λ_a − ln(α·R_a^β)`.
    pub fn log_error(&self, actual_bpp: f64, actual_lambda: f64) -> f64 {
        actual_lambda.ln() - (self.alpha.ln() + self.beta * actual_bpp.ln())
    }

    /// One gradient step toward the observed `(R_a, λ_a)` pair. Both rules
    /// use the pre-update parameters; results are clamped to the legal ranges.
    pub fn update(&self, actual_bpp: f64, actual_lambda: f64) -> Result<Self> {
        let bpp = positive("actual bpp", actual_bpp)?;
        let lambda = positive("actual lambda", actual_lambda)?;
        let err = self.log_error(bpp, lambda);
        let ln_r = bpp.ln().clamp(-LN_RATE_CLAMP, LN_RATE_CLAMP);
        let alpha = self.alpha + self.lr_alpha * err * self.alpha;
        let beta = self.beta + self.lr_beta * err * ln_r;
        Ok(Self {
            alpha: alpha.clamp(ALPHA_RANGE.0, ALPHA_RANGE.1),
            beta: beta.clamp(BETA_RANGE.0, BETA_RANGE.1),
            ..*self
        })
    }
}

/// Independent model state per coding context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelContext {
    Intra,
    Layer1,
    Layer2,
    Layer3,
}

impl ModelContext {
    pub const ALL: [ModelContext; 4] = [Self::Intra, Self::Layer1, Self::Layer2, Self::Layer3];

    pub fn of(kind: FrameType, layer: u8) -> Self {
        match (kind, layer) {
            (FrameType::I, _) => Self::Intra,
            (_, 0 | 1) => Self::Layer1,
            (_, 2) => Self::Layer2,
            _ => Self::Layer3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Intra => "i",
            Self::Layer1 => "l1",
            Self::Layer2 => "l2",
            Self::Layer3 => "l3",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSet {
    models: [RdModel; 4],
}

impl Default for ModelSet {
    fn default() -> Self {
        let p = RdModel::default();
        Self { models: [RdModel::intra(), p, p, p] }
    }
}

impl ModelSet {
    pub fn with_learning_rates(lr_alpha: f64, lr_beta: f64) -> Self {
        let mut set = Self::default();
        for m in &mut set.models {
            m.lr_alpha = lr_alpha;
            m.lr_beta = lr_beta;
        }
        set
    }

    pub fn get(&self, ctx: ModelContext) -> &RdModel {
        &self.models[ctx.slot()]
    }

    pub fn get_mut(&mut self, ctx: ModelContext) -> &mut RdModel {
        &mut self.models[ctx.slot()]
    }
}
