//! Monte Carlo check that the signed injection keeps the marginal
//! `x_{n-1} | x0 ~ N(x0, tau_{n-1}^2 I)` for either orientation of the noise
//! estimate.
//!
//! Each sample draws `x_n = x0 + tau_n z1` and then
//! `x_{n-1} = x0 + sqrt(1 - eta^2) tau_{n-1} xi (x_n - x0) / tau_n + eta tau_{n-1} z2`.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{NoiseStreams, Purpose};
use crate::scalar::Scalar;
use crate::schedule::Schedule;

use super::NoiseSign;

/// Deliberate defects for exercising the checker itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Fault {
    /// Adds one to the noise-estimate direction, shifting the mean by
    /// `sqrt(1 - eta^2) tau_{n-1}`.
    ShiftedEstimate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloOptions {
    pub samples: usize,
    pub seed: u64,
    /// Pass threshold in standard errors.
    pub z_threshold: f64,
    pub fault: Option<Fault>,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 0,
            z_threshold: 3.0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionStats {
    pub tau_n: f64,
    pub tau_prev: f64,
    pub eta: f64,
    pub xi: f64,
    pub samples: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub variance_se: Vec<f64>,
    /// Largest `|mean - x0| / se` over coordinates.
    pub max_mean_z: f64,
    /// Largest `|variance - tau_prev^2| / se` over coordinates.
    pub max_variance_z: f64,
    pub passed: bool,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }

    fn mean_se(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    fn variance_se(&self) -> f64 {
        let pop = self.m2 / self.n;
        ((self.m4 / self.n - pop * pop) / self.n).max(0.0).sqrt()
    }
}

/// Simulates one transition `tau_n -> tau_prev` from a fixed `x0`.
pub fn verify_transition<T: Scalar>(
    x0: &Image<T>,
    tau_n: f64,
    tau_prev: f64,
    eta: f64,
    sign: NoiseSign,
    options: &MonteCarloOptions,
    stream: u64,
) -> Result<TransitionStats> {
    if !(tau_n > 0.0) || !(tau_prev > 0.0) || !tau_n.is_finite() || !tau_prev.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degenerate levels tau_n = {tau_n}, tau_prev = {tau_prev}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta {eta} outside [0, 1]")));
    }
    if options.samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let xi = sign.xi();
    let shift = match options.fault {
        Some(Fault::ShiftedEstimate) => 1.0,
        None => 0.0,
    };
    let est_coef = (1.0 - eta * eta).sqrt() * tau_prev;
    let noise_coef = eta * tau_prev;
    let x0: Vec<f64> = x0.data().iter().map(|v| v.as_f64()).collect();
    let mut moments = vec![Moments::default(); x0.len()];
    let mut rng = NoiseStreams::new(options.seed).rng(stream, Purpose::MonteCarlo);
    for _ in 0..options.samples {
        for (m, &c) in moments.iter_mut().zip(&x0) {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let x_n = c + tau_n * z1;
            let direction = xi * (x_n - c) / tau_n + shift;
            m.push(c + est_coef * direction + noise_coef * z2);
        }
    }
    let target_var = tau_prev * tau_prev;
    let mean: Vec<f64> = moments.iter().map(|m| m.mean).collect();
    let variance: Vec<f64> = moments.iter().map(Moments::variance).collect();
    let mean_se: Vec<f64> = moments.iter().map(Moments::mean_se).collect();
    let variance_se: Vec<f64> = moments.iter().map(Moments::variance_se).collect();
    let max_mean_z = mean
        .iter()
        .zip(&x0)
        .zip(&mean_se)
        .map(|((m, c), se)| (m - c).abs() / se)
        .fold(0.0, f64::max);
    let max_variance_z = variance
        .iter()
        .zip(&variance_se)
        .map(|(v, se)| (v - target_var).abs() / se)
        .fold(0.0, f64::max);
    Ok(TransitionStats {
        tau_n,
        tau_prev,
        eta,
        xi,
        samples: options.samples,
        mean,
        variance,
        mean_se,
        variance_se,
        max_mean_z,
        max_variance_z,
        passed: max_mean_z <= options.z_threshold && max_variance_z <= options.z_threshold,
    })
}

/// Checks every consecutive pair `(tau_n, tau_{n-1})` of `schedule`.
pub fn verify_proposition1<T: Scalar>(
    x0: &Image<T>,
    schedule: &Schedule<T>,
    eta: f64,
    sign: NoiseSign,
    options: &MonteCarloOptions,
) -> Result<Vec<TransitionStats>> {
    if options.samples < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "at least 10^4 samples required, got {}",
            options.samples
        )));
    }
    let tau = schedule.tau();
    tau.windows(2)
        .enumerate()
        .map(|(k, w)| verify_transition(x0, w[0].as_f64(), w[1].as_f64(), eta, sign, options, k as u64))
        .collect()
}
