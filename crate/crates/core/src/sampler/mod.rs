//! Guided few-step samplers.
//!
//! [`cm4ir_restore`] is the main loop: per step it denoises at `(1 + delta) tau`,
//! takes a back-projection step towards the measurements, and re-noises to the
//! next level with `sqrt(1 - eta^2) tau' z_neg + eta tau' z`, where
//! `z_neg = (x0 - x) / tau` is the negated noise estimate. The remaining
//! samplers are the ablation family it is compared against.

mod loops;
mod prop1;
mod trajectory;

pub use loops::{cm4ir_restore, cm_baseline_sample, ddim_inject, polyak_restore};
pub use prop1::{verify_proposition1, verify_transition, Fault, MonteCarloOptions, TransitionStats};
pub use trajectory::{StepRecord, Trajectory};

use serde::{Deserialize, Serialize};

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::ops::{median_init, LinearOperator, OperatorKind};
use crate::scalar::Scalar;
use crate::schedule::Schedule;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Variant<T> {
    /// Split injection with the negated noise estimate.
    Cm4ir,
    /// Plain multistep consistency sampling: `x = x0 - mu g + tau' z`.
    CmBaseline,
    /// Split injection with the DDIM-oriented estimate `(x - x0) / tau`.
    DdimSign,
    /// Heavy-ball direction `beta (x0_n - x0_{n+1})` in place of the estimate.
    Polyak { beta: T },
}

/// Orientation `xi` of the estimated noise in the injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseSign {
    /// `xi = +1`: `(x - x0) / tau`, pointing back at the current sample.
    Ddim,
    /// `xi = -1`: `(x0 - x) / tau`.
    Negated,
}

impl NoiseSign {
    pub fn xi(self) -> f64 {
        match self {
            NoiseSign::Ddim => 1.0,
            NoiseSign::Negated => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuidanceMode {
    /// `A^dagger (A x - y)`
    BackProjection,
    /// `A^T (A x - y)`
    LeastSquares,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitMode<T> {
    /// Median fill for inpainting masks, pseudoinverse otherwise.
    Auto,
    Pseudoinverse,
    Median,
    Zero,
    Given(Image<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig<T> {
    pub variant: Variant<T>,
    pub schedule: Schedule<T>,
    pub guidance: GuidanceMode,
    pub seed: u64,
    pub record_trajectory: bool,
    pub init: InitMode<T>,
    /// Overrides the variant's noise orientation.
    pub sign: Option<NoiseSign>,
    /// Measurement noise level; back-projection uses `reg = sigma_y^2 zeta`.
    pub sigma_y: T,
    /// Explicit per-step regularisation, replacing `sigma_y^2 zeta`.
    pub reg: Option<Vec<T>>,
    /// Return `x0 - mu g` from the last step instead of the raw denoiser output.
    pub final_bp_correction: bool,
}

impl<T: Scalar> SamplerConfig<T> {
    pub fn new(schedule: Schedule<T>) -> Self {
        Self {
            variant: Variant::Cm4ir,
            schedule,
            guidance: GuidanceMode::BackProjection,
            seed: 0,
            record_trajectory: false,
            init: InitMode::Auto,
            sign: None,
            sigma_y: T::zero(),
            reg: None,
            final_bp_correction: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.schedule.eta();
        if !(eta >= T::zero() && eta <= T::one()) {
            return Err(Error::InvalidParameter(format!("eta {eta} outside [0, 1]")));
        }
        if let Variant::Polyak { beta } = self.variant {
            if !(beta >= T::zero()) {
                return Err(Error::InvalidParameter(format!("polyak beta must be >= 0, got {beta}")));
            }
        }
        if let Some(reg) = &self.reg {
            if reg.len() != self.schedule.len() || reg.iter().any(|r| !(*r >= T::zero())) {
                return Err(Error::InvalidParameter("reg needs one entry >= 0 per step".into()));
            }
        }
        if !(self.sigma_y >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_y must be >= 0, got {}",
                self.sigma_y
            )));
        }
        if let Some(t) = self.schedule.tau().iter().find(|t| !(**t > T::of(1e-6))) {
            return Err(Error::InvalidParameter(format!("tau {t} too small to divide by")));
        }
        Ok(())
    }

    /// Regularisation for step `k` (execution order).
    pub fn reg_at(&self, k: usize) -> T {
        match &self.reg {
            Some(r) => r[k],
            None => self.sigma_y * self.sigma_y * self.schedule.zeta(),
        }
    }

    pub fn reg_vector(&self) -> Vec<T> {
        (0..self.schedule.len()).map(|k| self.reg_at(k)).collect()
    }

    /// Noise orientation in effect for the split-injection variants.
    pub fn effective_sign(&self) -> NoiseSign {
        self.sign.unwrap_or(match self.variant {
            Variant::DdimSign => NoiseSign::Ddim,
            _ => NoiseSign::Negated,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Restoration<T> {
    pub image: Image<T>,
    pub trajectory: Option<Trajectory<T>>,
}

/// Measurement-side inputs for guidance.
#[derive(Clone, Copy, Debug)]
pub struct GuidanceTarget<'a, T: Scalar> {
    pub op: &'a LinearOperator<T>,
    pub y: &'a Image<T>,
    pub mode: GuidanceMode,
    /// Back-projection regularisation per step, execution order.
    pub reg: &'a [T],
}

impl<T: Scalar> GuidanceTarget<'_, T> {
    pub(crate) fn gradient(&self, k: usize, x0: &Image<T>) -> Result<Option<Image<T>>> {
        match self.mode {
            GuidanceMode::BackProjection => {
                let reg = self.reg.get(k).copied().unwrap_or_else(T::zero);
                self.op.bp_gradient(x0, self.y, reg).map(Some)
            }
            GuidanceMode::LeastSquares => self.op.ls_gradient(x0, self.y).map(Some),
            GuidanceMode::None => Ok(None),
        }
    }
}

/// Starting point before noise is added.
pub fn initial_estimate<T: Scalar>(
    op: &LinearOperator<T>,
    y: &Image<T>,
    init: &InitMode<T>,
    reg: T,
) -> Result<Image<T>> {
    match (init, op.kind()) {
        (InitMode::Auto, OperatorKind::Inpaint { mask }) | (InitMode::Median, OperatorKind::Inpaint { mask }) => {
            median_init(mask, op.input_shape().channels, y)
        }
        (InitMode::Median, _) => Err(Error::InvalidParameter(
            "median init needs an inpainting operator".into(),
        )),
        (InitMode::Auto, _) | (InitMode::Pseudoinverse, _) => op.apply_pinv(y, reg),
        (InitMode::Zero, _) => Ok(Image::zeros(op.input_shape())),
        (InitMode::Given(x), _) => {
            x.expect_shape(op.input_shape())?;
            Ok(x.clone())
        }
    }
}

/// Runs the configured variant.
pub fn restore<T: Scalar, D: Denoiser<T> + ?Sized>(
    op: &LinearOperator<T>,
    y: &Image<T>,
    denoiser: &mut D,
    config: &SamplerConfig<T>,
) -> Result<Restoration<T>> {
    match config.variant {
        Variant::Cm4ir | Variant::DdimSign => cm4ir_restore(op, y, denoiser, config),
        Variant::Polyak { .. } => polyak_restore(op, y, denoiser, config),
        Variant::CmBaseline => {
            config.validate()?;
            let x_init = initial_estimate(op, y, &config.init, config.reg_at(0))?;
            let reg = config.reg_vector();
            let target = GuidanceTarget {
                op,
                y,
                mode: config.guidance,
                reg: &reg,
            };
            cm_baseline_sample(
                denoiser,
                &config.schedule,
                Some(&target),
                &x_init,
                config.seed,
                config.record_trajectory,
            )
        }
    }
}

/// Denoiser evaluations a variant spends on an `n`-step schedule.
pub fn nfe_count(steps: usize) -> usize {
    steps
}
