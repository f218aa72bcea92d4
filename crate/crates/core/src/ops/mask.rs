use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::rng::{NoiseStreams, Purpose};
use crate::scalar::Scalar;

/// Per-pixel observation pattern. A missing pixel loses all of its channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InpaintMask {
    height: usize,
    width: usize,
    kept: Vec<bool>,
}

impl InpaintMask {
    pub fn new(height: usize, width: usize, kept: Vec<bool>) -> Result<Self> {
        if kept.len() != height * width {
            return Err(Error::InvalidParameter(format!(
                "mask has {} entries for a {height}x{width} grid",
                kept.len()
            )));
        }
        Ok(Self { height, width, kept })
    }

    /// Keeps exactly `round(keep_fraction * H * W)` pixels chosen uniformly by `seed`.
    pub fn random(height: usize, width: usize, keep_fraction: f64, seed: u64) -> Result<Self> {
        if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "keep fraction {keep_fraction} outside (0, 1]"
            )));
        }
        let pixels = height * width;
        let count = ((keep_fraction * pixels as f64).round() as usize).clamp(1, pixels);
        let mut rng = NoiseStreams::new(seed).rng(0, Purpose::Mask);
        let mut kept = vec![false; pixels];
        for i in sample(&mut rng, pixels, count) {
            kept[i] = true;
        }
        Self::new(height, width, kept)
    }

    /// Nonzero samples (in any channel) mark observed pixels.
    pub fn from_image<T: Scalar>(image: &Image<T>) -> Result<Self> {
        let s = image.shape();
        let kept = (0..s.pixels())
            .map(|p| (0..s.channels).any(|c| image.data()[p * s.channels + c] != T::zero()))
            .collect();
        Self::new(s.height, s.width, kept)
    }

    pub fn to_image<T: Scalar>(&self) -> Image<T> {
        let data = self
            .kept
            .iter()
            .map(|&k| if k { T::one() } else { T::zero() })
            .collect();
        Image::from_raw(Shape::new(self.height, self.width, 1), data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kept(&self) -> &[bool] {
        &self.kept
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn keep_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.kept.len() as f64
    }

    pub(crate) fn kept_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.kept.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i)
    }
}

/// Observed pixels copied from `y`; missing pixels filled with the per-channel
/// median of the observed values.
pub fn median_init<T: Scalar>(mask: &InpaintMask, channels: usize, y: &Image<T>) -> Result<Image<T>> {
    let expected = Shape::new(mask.kept_count(), 1, channels);
    y.expect_shape(expected)?;
    if mask.kept_count() == 0 {
        return Err(Error::EmptyObservedSet);
    }
    let medians: Vec<T> = (0..channels)
        .map(|c| {
            let mut v = y.channel(c);
            v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / T::of(2.0)
            }
        })
        .collect();
    let shape = Shape::new(mask.height, mask.width, channels);
    let mut out = Image::from_fn(shape, |_, _, c| medians[c]);
    let data = out.data_mut();
    for (k, p) in mask.kept_indices().enumerate() {
        for c in 0..channels {
            data[p * channels + c] = y.data()[k * channels + c];
        }
    }
    Ok(out)
}
