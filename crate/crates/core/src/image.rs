//! Image rasters and the PSNR score.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Height, width and channel count of a raster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Row-major, channel-interleaved raster with nominal range `[0, 1]`.
///
/// Measurements produced by degradation operators are stored as images too;
/// their shape is the operator's output shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    /// Wraps `data`, checking its length against `shape` and that every sample is finite.
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::BufferLength {
                shape,
                expected: shape.len(),
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_raw(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    /// Builds an image from `f(row, col, channel)`.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for r in 0..shape.height {
            for c in 0..shape.width {
                for ch in 0..shape.channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[self.shape.index(row, col, channel)]
    }

    /// Same samples under a different shape with the same element count.
    pub fn reshaped(self, shape: Shape) -> Result<Self> {
        if shape.len() != self.data.len() {
            return Err(Error::BufferLength {
                shape,
                expected: shape.len(),
                found: self.data.len(),
            });
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn expect_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: self.shape,
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        other.expect_shape(self.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        other.expect_shape(self.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        other.expect_shape(self.shape)?;
        Ok(dot(&self.data, &other.data))
    }

    /// Euclidean norm of the flattened samples.
    pub fn norm(&self) -> T {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn clipped(&self, lo: T, hi: T) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    /// Samples of one channel in row-major order.
    pub fn channel(&self, channel: usize) -> Vec<T> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.shape.channels)
            .copied()
            .collect()
    }

    pub(crate) fn set_channel(&mut self, channel: usize, plane: &[T]) {
        debug_assert_eq!(plane.len(), self.shape.pixels());
        let stride = self.shape.channels;
        for (dst, &src) in self.data.iter_mut().skip(channel).step_by(stride).zip(plane) {
            *dst = src;
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// PSNR settings: signal peak and the value reported for a zero error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsnrOptions {
    pub peak: f64,
    pub cap_db: f64,
}

impl Default for PsnrOptions {
    fn default() -> Self {
        Self {
            peak: 1.0,
            cap_db: 100.0,
        }
    }
}

/// `10 log10(peak^2 / MSE)` in decibels, saturating at `options.cap_db`.
pub fn psnr<T: Scalar>(reference: &Image<T>, candidate: &Image<T>, options: PsnrOptions) -> Result<f64> {
    candidate.expect_shape(reference.shape())?;
    if !(options.peak > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "psnr peak must be positive, got {}",
            options.peak
        )));
    }
    reference.check_finite()?;
    candidate.check_finite()?;
    let n = reference.data.len();
    if n == 0 {
        return Err(Error::InvalidParameter("psnr of an empty image".into()));
    }
    let sse: f64 = reference
        .data
        .iter()
        .zip(&candidate.data)
        .map(|(a, b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(options.cap_db);
    }
    Ok((10.0 * (options.peak * options.peak / mse).log10()).min(options.cap_db))
}

/// Score of a restoration: PSNR against ground truth when one is known, and the
/// relative data residual `||A x - y|| / ||y||`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: Option<f64>,
    pub residual_norm: f64,
    /// PSNR is computed after clipping the candidate to `[0, 1]`.
    pub clipped_before_scoring: bool,
}

impl MetricReport {
    pub fn evaluate<T: Scalar>(
        op: &crate::ops::LinearOperator<T>,
        measurement: &Image<T>,
        restored: &Image<T>,
        ground_truth: Option<&Image<T>>,
        options: PsnrOptions,
    ) -> Result<Self> {
        let residual = op.apply(restored)?.sub(measurement)?;
        let y_norm = measurement.norm();
        let residual_norm = if y_norm > T::zero() {
            (residual.norm() / y_norm).as_f64()
        } else {
            residual.norm().as_f64()
        };
        let psnr_db = match ground_truth {
            Some(gt) => Some(psnr(gt, &restored.clipped(T::zero(), T::one()), options)?),
            None => None,
        };
        Ok(Self {
            psnr_db,
            residual_norm,
            clipped_before_scoring: true,
        })
    }
}
