use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::scalar::Scalar;

/// 2-D convolution taps with the anchor marking the tap at zero offset.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel<T> {
    rows: usize,
    cols: usize,
    taps: Vec<T>,
    anchor: (usize, usize),
}

impl<T: Scalar> BlurKernel<T> {
    pub fn new(rows: usize, cols: usize, taps: Vec<T>, anchor: (usize, usize)) -> Result<Self> {
        if rows == 0 || cols == 0 || taps.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "kernel {rows}x{cols} with {} taps",
                taps.len()
            )));
        }
        if anchor.0 >= rows || anchor.1 >= cols {
            return Err(Error::InvalidParameter(format!(
                "anchor {anchor:?} outside {rows}x{cols} kernel"
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("kernel taps must be finite".into()));
        }
        Ok(Self {
            rows,
            cols,
            taps,
            anchor,
        })
    }

    /// Truncated isotropic Gaussian of `size x size` taps, renormalised to unit sum.
    pub fn gaussian(size: usize, std: f64) -> Result<Self> {
        if size == 0 || !(std > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gaussian kernel size {size}, std {std}"
            )));
        }
        let c = (size as f64 - 1.0) / 2.0;
        let w: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - c;
                (-d * d / (2.0 * std * std)).exp()
            })
            .collect();
        let mut taps = Vec::with_capacity(size * size);
        for a in &w {
            for b in &w {
                taps.push(a * b);
            }
        }
        let sum: f64 = taps.iter().sum();
        Self::new(
            size,
            size,
            taps.into_iter().map(|t| T::of(t / sum)).collect(),
            (size / 2, size / 2),
        )
    }

    /// 9x9 taps with standard deviation 3.
    pub fn default_gaussian() -> Self {
        Self::gaussian(9, 3.0).expect("valid default kernel")
    }

    pub fn delta() -> Self {
        Self::new(1, 1, vec![T::one()], (0, 0)).expect("valid delta kernel")
    }

    /// Kernel stored as a single-channel image, anchored at its centre.
    pub fn from_image(image: &Image<T>) -> Result<Self> {
        let s = image.shape();
        if s.channels != 1 {
            return Err(Error::InvalidParameter(format!(
                "kernel image must have 1 channel, got {}",
                s.channels
            )));
        }
        Self::new(s.height, s.width, image.data().to_vec(), (s.height / 2, s.width / 2))
    }

    pub fn to_image(&self) -> Image<T> {
        Image::from_raw(Shape::new(self.rows, self.cols, 1), self.taps.clone())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn sum(&self) -> T {
        self.taps.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// `(row offset, col offset, weight)` triples relative to the anchor.
    pub(crate) fn offsets(&self) -> impl Iterator<Item = (isize, isize, T)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (0..self.cols).map(move |c| {
                (
                    r as isize - self.anchor.0 as isize,
                    c as isize - self.anchor.1 as isize,
                    self.taps[r * self.cols + c],
                )
            })
        })
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// One-dimensional anti-aliasing taps for downsampling by `factor`.
///
/// Output sample `i` sits at input coordinate `factor * i + (factor - 1) / 2`;
/// the cubic is stretched by `factor` so it spans `4 * factor` input samples.
/// Returns `(offset from factor * i, weight)` pairs normalised to unit sum.
pub fn bicubic_taps(factor: usize) -> Vec<(isize, f64)> {
    let f = factor as f64;
    let centre = (f - 1.0) / 2.0;
    let lo = (centre - 2.0 * f).ceil() as isize;
    let hi = (centre + 2.0 * f).floor() as isize;
    let mut taps: Vec<(isize, f64)> = (lo..=hi)
        .map(|e| (e, cubic((e as f64 - centre) / f)))
        .filter(|&(_, w)| w != 0.0)
        .collect();
    let sum: f64 = taps.iter().map(|t| t.1).sum();
    for t in &mut taps {
        t.1 /= sum;
    }
    taps
}
