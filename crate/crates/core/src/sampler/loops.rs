use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::ops::LinearOperator;
use crate::rng::{NoiseStreams, Purpose};
use crate::scalar::Scalar;
use crate::schedule::Schedule;

use super::trajectory::{StepRecord, Trajectory};
use super::{initial_estimate, GuidanceTarget, NoiseSign, Restoration, SamplerConfig, Variant};

/// Injection increment `sqrt(1 - eta^2) tau_prev xi (x_tau - x0) / tau_n + eta tau_prev z`.
///
/// `xi = +1` ([`NoiseSign::Ddim`]) uses the usual noise estimate; `xi = -1`
/// ([`NoiseSign::Negated`]) uses `(x0 - x_tau) / tau_n`.
pub fn ddim_inject<T: Scalar>(
    x0: &Image<T>,
    x_tau: &Image<T>,
    tau_n: T,
    tau_prev: T,
    eta: T,
    sign: NoiseSign,
    z: &Image<T>,
) -> Result<Image<T>> {
    if !(tau_n > T::zero()) {
        return Err(Error::InvalidParameter(format!("tau_n must be > 0, got {tau_n}")));
    }
    let mut out = Image::zeros(x0.shape());
    let terms = InjectionTerms::new(x0, x_tau, tau_n, tau_prev, eta, sign, z)?;
    terms.add_to(&mut out)?;
    Ok(out)
}

/// The two pieces of the split injection, kept apart so samplers can skip
/// vanishing terms and record each one.
struct InjectionTerms<T: Scalar> {
    estimate_coef: T,
    estimate_dir: Image<T>,
    noise_coef: T,
    noise: Image<T>,
}

impl<T: Scalar> InjectionTerms<T> {
    fn new(
        x0: &Image<T>,
        x_tau: &Image<T>,
        tau_n: T,
        tau_prev: T,
        eta: T,
        sign: NoiseSign,
        z: &Image<T>,
    ) -> Result<Self> {
        let xi = T::of(sign.xi());
        let estimate_dir = x_tau.zip_map(x0, |x, d| xi * (x - d) / tau_n)?;
        z.expect_shape(x0.shape())?;
        Ok(Self {
            estimate_coef: (T::one() - eta * eta).sqrt() * tau_prev,
            estimate_dir,
            noise_coef: eta * tau_prev,
            noise: z.clone(),
        })
    }

    fn add_to(&self, x: &mut Image<T>) -> Result<()> {
        if self.estimate_coef != T::zero() {
            x.axpy(self.estimate_coef, &self.estimate_dir)?;
        }
        if self.noise_coef != T::zero() {
            x.axpy(self.noise_coef, &self.noise)?;
        }
        Ok(())
    }

    fn estimate_term(&self) -> Image<T> {
        self.estimate_dir.scale(self.estimate_coef)
    }

    fn noise_term(&self) -> Image<T> {
        self.noise.scale(self.noise_coef)
    }
}

fn step_err(step: usize, tau: impl Scalar) -> impl FnOnce(Error) -> Error {
    move |e| e.at_step(step, tau.as_f64())
}

fn apply_guidance<T: Scalar>(x0: &Image<T>, g: Option<&Image<T>>, mu: T) -> Result<Image<T>> {
    let mut guided = x0.clone();
    if let Some(g) = g {
        guided.axpy(-mu, g)?;
    }
    Ok(guided)
}

/// Guided restoration with split noise injection.
///
/// Starts from `x_init + tau_N z` (`x_init = A^dagger y`, or the median fill for
/// inpainting). Step `k` denoises at `(1 + delta_k) tau_k`, subtracts
/// `mu_k` times the guidance gradient and, except after the last step, injects
/// noise at the next level. Returns the final denoiser output.
pub fn cm4ir_restore<T: Scalar, D: Denoiser<T> + ?Sized>(
    op: &LinearOperator<T>,
    y: &Image<T>,
    denoiser: &mut D,
    config: &SamplerConfig<T>,
) -> Result<Restoration<T>> {
    config.validate()?;
    y.expect_shape(op.output_shape())?;
    let schedule = &config.schedule;
    let sign = config.effective_sign();
    let streams = NoiseStreams::new(config.seed);
    let reg = config.reg_vector();
    let target = GuidanceTarget {
        op,
        y,
        mode: config.guidance,
        reg: &reg,
    };
    let shape = op.input_shape();

    let mut x = initial_estimate(op, y, &config.init, reg[0])?;
    x.axpy(schedule.tau()[0], &streams.gaussian(shape, 0, Purpose::Init))?;

    let mut trajectory = config.record_trajectory.then(Trajectory::default);
    let last = schedule.len() - 1;
    for k in 0..=last {
        let tau = schedule.tau()[k];
        let tau_next = schedule.tau_next(k);
        let sigma = (T::one() + schedule.delta()[k]) * tau;
        let x0 = denoiser.denoise(&x, sigma).map_err(step_err(k, tau))?;
        let g = target.gradient(k, &x0).map_err(step_err(k, tau))?;
        let guided = apply_guidance(&x0, g.as_ref(), schedule.mu()[k])?;

        if k == last {
            if let Some(t) = trajectory.as_mut() {
                t.steps.push(StepRecord::new(
                    k,
                    schedule.len(),
                    tau,
                    tau_next,
                    sigma,
                    &x,
                    &x0,
                    &guided,
                    g.as_ref(),
                    None,
                    None,
                ));
            }
            let image = if config.final_bp_correction { guided } else { x0 };
            return Ok(Restoration { image, trajectory });
        }

        let z = streams.gaussian(shape, k as u64, Purpose::Step);
        let terms = InjectionTerms::new(&x0, &x, tau, tau_next, schedule.eta(), sign, &z).map_err(step_err(k, tau))?;
        let mut next = guided.clone();
        terms.add_to(&mut next)?;
        if let Some(t) = trajectory.as_mut() {
            t.steps.push(StepRecord::new(
                k,
                schedule.len(),
                tau,
                tau_next,
                sigma,
                &x,
                &x0,
                &guided,
                g.as_ref(),
                Some(terms.estimate_term()),
                Some(terms.noise_term()),
            ));
        }
        x = next;
    }
    unreachable!("schedule has at least one step")
}

/// Multistep consistency sampling `x0 = f(x, tau_n)`, `x = x0 - mu_n grad + tau_{n-1} z`
/// starting from `x_init + tau_N z`. With `x_init = 0` and no guidance this is
/// unconditional generation.
pub fn cm_baseline_sample<T: Scalar, D: Denoiser<T> + ?Sized>(
    denoiser: &mut D,
    schedule: &Schedule<T>,
    guidance: Option<&GuidanceTarget<'_, T>>,
    x_init: &Image<T>,
    seed: u64,
    record_trajectory: bool,
) -> Result<Restoration<T>> {
    let streams = NoiseStreams::new(seed);
    let shape = x_init.shape();
    let mut x = x_init.clone();
    x.axpy(schedule.tau()[0], &streams.gaussian(shape, 0, Purpose::Init))?;
    let mut trajectory = record_trajectory.then(Trajectory::default);
    let last = schedule.len() - 1;
    for k in 0..=last {
        let tau = schedule.tau()[k];
        let tau_next = schedule.tau_next(k);
        let x0 = denoiser.denoise(&x, tau).map_err(step_err(k, tau))?;
        let g = match guidance {
            Some(t) => t.gradient(k, &x0).map_err(step_err(k, tau))?,
            None => None,
        };
        let guided = apply_guidance(&x0, g.as_ref(), schedule.mu()[k])?;
        if k == last {
            if let Some(t) = trajectory.as_mut() {
                t.steps.push(StepRecord::new(
                    k,
                    schedule.len(),
                    tau,
                    tau_next,
                    tau,
                    &x,
                    &x0,
                    &guided,
                    g.as_ref(),
                    None,
                    None,
                ));
            }
            return Ok(Restoration { image: x0, trajectory });
        }
        let z = streams.gaussian(shape, k as u64, Purpose::Step);
        let mut next = guided.clone();
        next.axpy(tau_next, &z)?;
        if let Some(t) = trajectory.as_mut() {
            t.steps.push(StepRecord::new(
                k,
                schedule.len(),
                tau,
                tau_next,
                tau,
                &x,
                &x0,
                &guided,
                g.as_ref(),
                None,
                Some(z.scale(tau_next)),
            ));
        }
        x = next;
    }
    unreachable!("schedule has at least one step")
}

/// Ablation with a heavy-ball direction in place of the noise estimate:
/// `x = x0 - mu g + beta (x0_n - x0_{n+1}) + eta tau_{n-1} z`. The momentum is
/// zero on the first step. With the identity denoiser and `eta = 0` this is
/// Polyak's heavy-ball iteration on the guidance objective.
pub fn polyak_restore<T: Scalar, D: Denoiser<T> + ?Sized>(
    op: &LinearOperator<T>,
    y: &Image<T>,
    denoiser: &mut D,
    config: &SamplerConfig<T>,
) -> Result<Restoration<T>> {
    config.validate()?;
    y.expect_shape(op.output_shape())?;
    let beta = match config.variant {
        Variant::Polyak { beta } => beta,
        _ => T::zero(),
    };
    let schedule = &config.schedule;
    let streams = NoiseStreams::new(config.seed);
    let reg = config.reg_vector();
    let target = GuidanceTarget {
        op,
        y,
        mode: config.guidance,
        reg: &reg,
    };
    let shape = op.input_shape();

    let mut x = initial_estimate(op, y, &config.init, reg[0])?;
    x.axpy(schedule.tau()[0], &streams.gaussian(shape, 0, Purpose::Init))?;

    let mut trajectory = config.record_trajectory.then(Trajectory::default);
    let mut previous_x0: Option<Image<T>> = None;
    let last = schedule.len() - 1;
    for k in 0..=last {
        let tau = schedule.tau()[k];
        let tau_next = schedule.tau_next(k);
        let sigma = (T::one() + schedule.delta()[k]) * tau;
        let x0 = denoiser.denoise(&x, sigma).map_err(step_err(k, tau))?;
        let g = target.gradient(k, &x0).map_err(step_err(k, tau))?;
        let guided = apply_guidance(&x0, g.as_ref(), schedule.mu()[k])?;
        if k == last {
            if let Some(t) = trajectory.as_mut() {
                t.steps.push(StepRecord::new(
                    k,
                    schedule.len(),
                    tau,
                    tau_next,
                    sigma,
                    &x,
                    &x0,
                    &guided,
                    g.as_ref(),
                    None,
                    None,
                ));
            }
            let image = if config.final_bp_correction { guided } else { x0 };
            return Ok(Restoration { image, trajectory });
        }
        let mut next = guided.clone();
        let momentum = match &previous_x0 {
            Some(p) if beta != T::zero() => Some(x0.sub(p)?.scale(beta)),
            _ => None,
        };
        if let Some(m) = &momentum {
            next.axpy(T::one(), m)?;
        }
        let noise_coef = schedule.eta() * tau_next;
        let noise = if noise_coef != T::zero() {
            let z = streams.gaussian(shape, k as u64, Purpose::Step);
            next.axpy(noise_coef, &z)?;
            Some(z.scale(noise_coef))
        } else {
            None
        };
        if let Some(t) = trajectory.as_mut() {
            t.steps.push(StepRecord::new(
                k,
                schedule.len(),
                tau,
                tau_next,
                sigma,
                &x,
                &x0,
                &guided,
                g.as_ref(),
                momentum,
                noise,
            ));
        }
        previous_x0 = Some(x0);
        x = next;
    }
    unreachable!("schedule has at least one step")
}
