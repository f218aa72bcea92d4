//! Few-step zero-shot image restoration with consistency-model denoisers.
//!
//! The sampler alternates a denoiser call at an inflated noise level, a
//! back-projection step onto the measurements, and a noise injection that
//! mixes the negated noise estimate with fresh Gaussian noise. Everything is
//! generic over [`Scalar`] (`f32` / `f64`); the `*64` aliases below are the
//! working precision of the command-line tool and the test suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoise;
pub mod error;
pub mod fft;
pub mod image;
pub mod io;
pub mod ops;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod schedule;
pub mod verify;

pub use denoise::{Denoiser, GaussianMixture, GaussianPrior, IdentityDenoiser, RemoteDenoiser};
pub use error::{Error, Result};
pub use image::{psnr, MetricReport, PsnrOptions, Shape};
pub use ops::{degrade, median_init, BlurKernel, InpaintMask, LinearOperator, OperatorKind};
pub use rng::{NoiseStreams, Purpose};
pub use sampler::{
    cm4ir_restore, cm_baseline_sample, ddim_inject, polyak_restore, restore, verify_proposition1, GuidanceMode,
    InitMode, NoiseSign, Restoration, SamplerConfig, Trajectory, Variant,
};
pub use scalar::Scalar;
pub use schedule::{build_alpha_bar_table, build_schedule, AlphaBarTable, Schedule, ScheduleParams};

pub type Image<T = f64> = image::Image<T>;

pub type Image64 = image::Image<f64>;
pub type Image32 = image::Image<f32>;
pub type Operator64 = ops::LinearOperator<f64>;
pub type Operator32 = ops::LinearOperator<f32>;
pub type Schedule64 = schedule::Schedule<f64>;
pub type Schedule32 = schedule::Schedule<f32>;
pub type SamplerConfig64 = sampler::SamplerConfig<f64>;
pub type GaussianPrior64 = denoise::GaussianPrior<f64>;
