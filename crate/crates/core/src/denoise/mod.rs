//! The denoiser contract `f(x, sigma) -> x0` and the analytic denoisers used
//! to verify samplers exactly.

mod remote;

pub use remote::{read_frame, serve_connection, write_frame, RemoteDenoiser, MAX_FRAME_LEN};

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::rng::{NoiseStreams, Purpose};
use crate::scalar::Scalar;

/// Noise level below which every denoiser returns its input unchanged.
pub const DEFAULT_EPSILON: f64 = 0.002;

pub trait Denoiser<T: Scalar> {
    /// Smallest supported noise level.
    fn epsilon(&self) -> T {
        T::of(DEFAULT_EPSILON)
    }

    /// Estimate of the clean image for `sigma >= epsilon`.
    fn denoise_above_epsilon(&mut self, x: &Image<T>, sigma: T) -> Result<Image<T>>;

    /// `f(x, sigma)`. Below `epsilon` this is the identity (`f(x, eps) = x`).
    fn denoise(&mut self, x: &Image<T>, sigma: T) -> Result<Image<T>> {
        if !(sigma >= T::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise level must be finite and >= 0, got {sigma}"
            )));
        }
        x.check_finite()?;
        if sigma < self.epsilon() {
            return Ok(x.clone());
        }
        let out = self.denoise_above_epsilon(x, sigma)?;
        out.expect_shape(x.shape())?;
        Ok(out)
    }
}

impl<T: Scalar, D: Denoiser<T> + ?Sized> Denoiser<T> for &mut D {
    fn epsilon(&self) -> T {
        (**self).epsilon()
    }
    fn denoise_above_epsilon(&mut self, x: &Image<T>, sigma: T) -> Result<Image<T>> {
        (**self).denoise_above_epsilon(x, sigma)
    }
}

impl<T: Scalar, D: Denoiser<T> + ?Sized> Denoiser<T> for Box<D> {
    fn epsilon(&self) -> T {
        (**self).epsilon()
    }
    fn denoise_above_epsilon(&mut self, x: &Image<T>, sigma: T) -> Result<Image<T>> {
        (**self).denoise_above_epsilon(x, sigma)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityDenoiser;

impl<T: Scalar> Denoiser<T> for IdentityDenoiser {
    fn denoise_above_epsilon(&mut self, x: &Image<T>, _sigma: T) -> Result<Image<T>> {
        Ok(x.clone())
    }
}

/// Exact MMSE denoiser for the prior `x0 ~ N(mean, std^2 I)`:
/// `f(x, sigma) = (std^2 x + sigma^2 mean) / (std^2 + sigma^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrior<T> {
    mean: Image<T>,
    std: T,
}

impl<T: Scalar> GaussianPrior<T> {
    pub fn new(mean: Image<T>, std: T) -> Result<Self> {
        if !(std > T::zero()) || !std.is_finite() {
            return Err(Error::InvalidParameter(format!("prior std must be > 0, got {std}")));
        }
        mean.check_finite()?;
        Ok(Self { mean, std })
    }

    pub fn uniform(shape: Shape, mean: T, std: T) -> Result<Self> {
        Self::new(Image::filled(shape, mean), std)
    }

    pub fn mean(&self) -> &Image<T> {
        &self.mean
    }

    pub fn std(&self) -> T {
        self.std
    }

    /// Weight on `x` in the posterior mean: `std^2 / (std^2 + sigma^2)`.
    pub fn shrinkage(&self, sigma: T) -> T {
        let s2 = self.std * self.std;
        s2 / (s2 + sigma * sigma)
    }

    /// `grad log p_sigma(x) = -(x - mean) / (std^2 + sigma^2)`.
    pub fn score(&self, x: &Image<T>, sigma: T) -> Result<Image<T>> {
        let v = self.std * self.std + sigma * sigma;
        x.zip_map(&self.mean, |a, m| -(a - m) / v)
    }

    /// Independent draw `mean + std * z`.
    pub fn sample(&self, seed: u64) -> Image<T> {
        let z = NoiseStreams::new(seed).gaussian(self.mean.shape(), 0, Purpose::Synthetic);
        let mut x = self.mean.clone();
        x.axpy(self.std, &z).expect("same shape");
        x
    }
}

impl<T: Scalar> Denoiser<T> for GaussianPrior<T> {
    fn denoise_above_epsilon(&mut self, x: &Image<T>, sigma: T) -> Result<Image<T>> {
        let s2 = self.std * self.std;
        let v2 = sigma * sigma;
        let denom = s2 + v2;
        x.zip_map(&self.mean, |a, m| (s2 * a + v2 * m) / denom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent<T> {
    pub weight: T,
    pub mean: Image<T>,
    pub std: T,
}

/// Posterior mean under a mixture of isotropic Gaussians. Nonlinear in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture<T> {
    components: Vec<MixtureComponent<T>>,
}

impl<T: Scalar> GaussianMixture<T> {
    pub fn new(components: Vec<MixtureComponent<T>>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        };
        let shape = first.mean.shape();
        for c in &components {
            c.mean.expect_shape(shape)?;
            if !(c.weight > T::zero()) || !(c.std > T::zero()) {
                return Err(Error::InvalidParameter("mixture weights and stds must be > 0".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[MixtureComponent<T>] {
        &self.components
    }
}

impl<T: Scalar> Denoiser<T> for GaussianMixture<T> {
    fn denoise_above_epsilon(&mut self, x: &Image<T>, sigma: T) -> Result<Image<T>> {
        let d = T::of(x.data().len() as f64);
        let two = T::of(2.0);
        let two_pi = T::of(std::f64::consts::TAU);
        let mut log_r = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let v = c.std * c.std + sigma * sigma;
            let dist2 = x.sub(&c.mean)?.norm().powi(2);
            log_r.push(c.weight.ln() - d / two * (two_pi * v).ln() - dist2 / (two * v));
        }
        let max = log_r.iter().copied().fold(T::neg_infinity(), T::max);
        let w: Vec<T> = log_r.iter().map(|l| (*l - max).exp()).collect();
        let total = w.iter().fold(T::zero(), |a, &b| a + b);
        let mut out = Image::zeros(x.shape());
        for (c, wk) in self.components.iter().zip(w) {
            let s2 = c.std * c.std;
            let v2 = sigma * sigma;
            let post = x.zip_map(&c.mean, |a, m| (s2 * a + v2 * m) / (s2 + v2))?;
            out.axpy(wk / total, &post)?;
        }
        Ok(out)
    }
}

/// Declarative denoiser selection.
#[derive(Clone, Debug, PartialEq)]
pub enum DenoiserSpec<T> {
    GaussianPrior { mean: Image<T>, std: T },
    Mixture(Vec<MixtureComponent<T>>),
    Identity,
    Remote { endpoint: String },
}

impl<T: Scalar> DenoiserSpec<T> {
    pub fn build(&self) -> Result<Box<dyn Denoiser<T> + Send>> {
        Ok(match self {
            DenoiserSpec::GaussianPrior { mean, std } => Box::new(GaussianPrior::new(mean.clone(), *std)?),
            DenoiserSpec::Mixture(c) => Box::new(GaussianMixture::new(c.clone())?),
            DenoiserSpec::Identity => Box::new(IdentityDenoiser),
            DenoiserSpec::Remote { endpoint } => Box::new(RemoteDenoiser::connect(endpoint)?),
        })
    }
}
