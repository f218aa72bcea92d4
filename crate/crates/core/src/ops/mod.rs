//! Linear degradation operators `y = A x + e` and the actions guidance needs:
//! `A`, `A^T`, the (regularised) pseudoinverse `A^T (A A^T + reg I)^-1`, and
//! the back-projection / least-squares gradients built on them.
//!
//! Convolutions use periodic boundaries so the Fourier basis diagonalises
//! `A A^T` exactly. `apply` and `apply_transpose` run in the spatial domain;
//! only the pseudoinverse goes through the FFT, with conjugate gradients as
//! the general fallback.

mod cg;
mod kernel;
mod mask;

pub use cg::{conjugate_gradient, CgOptions, CgSolution};
pub use kernel::{bicubic_taps, cubic, BlurKernel};
pub use mask::{median_init, InpaintMask};

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::image::{Image, Shape};
use crate::rng::{NoiseStreams, Purpose};
use crate::scalar::Scalar;

/// Smallest spectral power used when dividing without regularisation.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorKind<T> {
    /// Bicubic anti-aliasing filter followed by subsampling by `factor` in both axes.
    SuperResolution { factor: usize },
    /// Circular convolution.
    Blur { kernel: BlurKernel<T> },
    /// Selection of the observed pixels, all channels of each.
    Inpaint { mask: InpaintMask },
    /// Dense `rows x cols` matrix acting on the flattened image.
    Matrix { rows: usize, cols: usize, entries: Vec<T> },
}

#[derive(Clone, Debug)]
struct Spectral<T: Scalar> {
    full: Fft2<T>,
    /// Measurement-grid transform, super-resolution only.
    low: Option<Fft2<T>>,
    /// DFT of the convolution kernel on the input grid.
    response: Vec<Complex<T>>,
    /// Symbol of `A A^T` on the measurement grid (`|K|^2` for blur, its alias sum for SR).
    gram: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LinearOperator<T: Scalar> {
    kind: OperatorKind<T>,
    input_shape: Shape,
    output_shape: Shape,
    spectral: Option<Spectral<T>>,
}

impl<T: Scalar> LinearOperator<T> {
    /// Bicubic downsampling of an `H x W x C` image by `factor`; `H` and `W`
    /// must be multiples of `factor`.
    pub fn super_resolution(input_shape: Shape, factor: usize) -> Result<Self> {
        if factor == 0 || !input_shape.height.is_multiple_of(factor) || !input_shape.width.is_multiple_of(factor) {
            return Err(Error::InvalidParameter(format!(
                "super-resolution factor {factor} must divide {input_shape}"
            )));
        }
        let output_shape = Shape::new(
            input_shape.height / factor,
            input_shape.width / factor,
            input_shape.channels,
        );
        let taps = bicubic_taps(factor);
        let (h, w) = (input_shape.height, input_shape.width);
        // z[p] = sum_e w(e) x[p + e]  <=>  convolution kernel at -e
        let mut embedded = vec![T::zero(); h * w];
        for &(er, wr) in &taps {
            for &(ec, wc) in &taps {
                let r = (-er).rem_euclid(h as isize) as usize;
                let c = (-ec).rem_euclid(w as isize) as usize;
                embedded[r * w + c] += T::of(wr * wc);
            }
        }
        let full = Fft2::new(h, w);
        let response = full.forward_real(&embedded);
        let (mh, mw) = (output_shape.height, output_shape.width);
        let f2 = T::of((factor * factor) as f64);
        let mut gram = vec![T::zero(); mh * mw];
        for r in 0..h {
            for c in 0..w {
                gram[(r % mh) * mw + c % mw] += response[r * w + c].norm_sqr();
            }
        }
        for g in &mut gram {
            *g /= f2;
        }
        Ok(Self {
            kind: OperatorKind::SuperResolution { factor },
            input_shape,
            output_shape,
            spectral: Some(Spectral {
                full,
                low: Some(Fft2::new(mh, mw)),
                response,
                gram,
            }),
        })
    }

    pub fn blur(input_shape: Shape, kernel: BlurKernel<T>) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(Error::InvalidParameter("blur on an empty image".into()));
        }
        let (h, w) = (input_shape.height, input_shape.width);
        let mut embedded = vec![T::zero(); h * w];
        for (dr, dc, weight) in kernel.offsets() {
            let r = dr.rem_euclid(h as isize) as usize;
            let c = dc.rem_euclid(w as isize) as usize;
            embedded[r * w + c] += weight;
        }
        let full = Fft2::new(h, w);
        let response = full.forward_real(&embedded);
        let gram = response.iter().map(|k| k.norm_sqr()).collect();
        Ok(Self {
            kind: OperatorKind::Blur { kernel },
            input_shape,
            output_shape: input_shape,
            spectral: Some(Spectral {
                full,
                low: None,
                response,
                gram,
            }),
        })
    }

    pub fn gaussian_blur(input_shape: Shape, size: usize, std: f64) -> Result<Self> {
        Self::blur(input_shape, BlurKernel::gaussian(size, std)?)
    }

    /// Delta-kernel blur, i.e. `A = I`.
    pub fn identity(shape: Shape) -> Result<Self> {
        Self::blur(shape, BlurKernel::delta())
    }

    /// Measurements are the kept pixels in raster order, shaped `kept x 1 x C`.
    pub fn inpaint(input_shape: Shape, mask: InpaintMask) -> Result<Self> {
        if mask.height() != input_shape.height || mask.width() != input_shape.width {
            return Err(Error::InvalidParameter(format!(
                "mask {}x{} does not cover {input_shape}",
                mask.height(),
                mask.width()
            )));
        }
        let output_shape = Shape::new(mask.kept_count(), 1, input_shape.channels);
        Ok(Self {
            kind: OperatorKind::Inpaint { mask },
            input_shape,
            output_shape,
            spectral: None,
        })
    }

    /// Dense operator on the flattened input; measurements are `rows x 1 x 1`.
    pub fn matrix(input_shape: Shape, rows: usize, entries: Vec<T>) -> Result<Self> {
        let cols = input_shape.len();
        if entries.len() != rows * cols || rows == 0 {
            return Err(Error::InvalidParameter(format!(
                "{} matrix entries for {rows} rows x {cols} columns",
                entries.len()
            )));
        }
        Ok(Self {
            kind: OperatorKind::Matrix { rows, cols, entries },
            input_shape,
            output_shape: Shape::new(rows, 1, 1),
            spectral: None,
        })
    }

    pub fn kind(&self) -> &OperatorKind<T> {
        &self.kind
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.output_shape
    }

    pub fn mask(&self) -> Option<&InpaintMask> {
        match &self.kind {
            OperatorKind::Inpaint { mask } => Some(mask),
            _ => None,
        }
    }

    /// `A x`
    pub fn apply(&self, x: &Image<T>) -> Result<Image<T>> {
        x.expect_shape(self.input_shape)?;
        let s = self.input_shape;
        let ch = s.channels;
        let out = match &self.kind {
            OperatorKind::SuperResolution { factor } => {
                let taps = bicubic_taps(*factor);
                let o = self.output_shape;
                let mut y = Image::zeros(o);
                let data = y.data_mut();
                for i in 0..o.height {
                    for j in 0..o.width {
                        for &(er, wr) in &taps {
                            let r = wrap(factor * i, er, s.height);
                            for &(ec, wc) in &taps {
                                let c = wrap(factor * j, ec, s.width);
                                let weight = T::of(wr * wc);
                                for k in 0..ch {
                                    data[o.index(i, j, k)] += weight * x.data()[s.index(r, c, k)];
                                }
                            }
                        }
                    }
                }
                y
            }
            OperatorKind::Blur { kernel } => {
                let mut y = Image::zeros(s);
                for (dr, dc, weight) in kernel.offsets() {
                    shifted_axpy(y.data_mut(), x.data(), s, -dr, -dc, weight);
                }
                y
            }
            OperatorKind::Inpaint { mask } => {
                let mut data = Vec::with_capacity(self.output_shape.len());
                for p in mask.kept_indices() {
                    data.extend_from_slice(&x.data()[p * ch..(p + 1) * ch]);
                }
                Image::from_raw(self.output_shape, data)
            }
            OperatorKind::Matrix { rows, cols, entries } => {
                let data = (0..*rows)
                    .map(|i| crate::image::dot(&entries[i * cols..(i + 1) * cols], x.data()))
                    .collect();
                Image::from_raw(self.output_shape, data)
            }
        };
        Ok(out)
    }

    /// `A^T v`
    pub fn apply_transpose(&self, v: &Image<T>) -> Result<Image<T>> {
        v.expect_shape(self.output_shape)?;
        let s = self.input_shape;
        let ch = s.channels;
        let out = match &self.kind {
            OperatorKind::SuperResolution { factor } => {
                let taps = bicubic_taps(*factor);
                let o = self.output_shape;
                let mut x = Image::zeros(s);
                let data = x.data_mut();
                for i in 0..o.height {
                    for j in 0..o.width {
                        for &(er, wr) in &taps {
                            let r = wrap(factor * i, er, s.height);
                            for &(ec, wc) in &taps {
                                let c = wrap(factor * j, ec, s.width);
                                let weight = T::of(wr * wc);
                                for k in 0..ch {
                                    data[s.index(r, c, k)] += weight * v.data()[o.index(i, j, k)];
                                }
                            }
                        }
                    }
                }
                x
            }
            OperatorKind::Blur { kernel } => {
                let mut x = Image::zeros(s);
                for (dr, dc, weight) in kernel.offsets() {
                    shifted_axpy(x.data_mut(), v.data(), s, dr, dc, weight);
                }
                x
            }
            OperatorKind::Inpaint { mask } => {
                let mut x = Image::zeros(s);
                let data = x.data_mut();
                for (m, p) in mask.kept_indices().enumerate() {
                    data[p * ch..(p + 1) * ch].copy_from_slice(&v.data()[m * ch..(m + 1) * ch]);
                }
                x
            }
            OperatorKind::Matrix { rows, cols, entries } => {
                let mut data = vec![T::zero(); *cols];
                for i in 0..*rows {
                    let vi = v.data()[i];
                    for (d, &a) in data.iter_mut().zip(&entries[i * cols..(i + 1) * cols]) {
                        *d += a * vi;
                    }
                }
                Image::from_raw(s, data)
            }
        };
        Ok(out)
    }

    /// Whether `apply_pinv` has a closed form (mask or Fourier) for this operator.
    pub fn has_closed_form_pinv(&self) -> bool {
        !matches!(self.kind, OperatorKind::Matrix { .. })
    }

    /// `A^T (A A^T + reg I)^-1 v`.
    ///
    /// With `reg = 0` Fourier divisions use `max(|K|^2, SPECTRAL_FLOOR)`.
    pub fn apply_pinv(&self, v: &Image<T>, reg: T) -> Result<Image<T>> {
        v.expect_shape(self.output_shape)?;
        check_reg(reg)?;
        match (&self.kind, &self.spectral) {
            (OperatorKind::Inpaint { .. }, _) => Ok(self.apply_transpose(v)?.scale(T::one() / (T::one() + reg))),
            (OperatorKind::Matrix { .. }, _) => self.apply_pinv_cg(v, reg, CgOptions::for_scalar::<T>()),
            (_, Some(sp)) => Ok(self.fourier_pinv(sp, v, reg)),
            (_, None) => unreachable!("convolutional operators carry spectra"),
        }
    }

    fn fourier_pinv(&self, sp: &Spectral<T>, v: &Image<T>, reg: T) -> Image<T> {
        let s = self.input_shape;
        let o = self.output_shape;
        let floor = T::of(SPECTRAL_FLOOR);
        let denom = |g: T| if reg > T::zero() { g + reg } else { g.max(floor) };
        let mut out = Image::zeros(s);
        for k in 0..s.channels {
            let v_hat = match &sp.low {
                Some(low) => low.forward_real(&v.channel(k)),
                None => sp.full.forward_real(&v.channel(k)),
            };
            let mut u_hat = Vec::with_capacity(s.pixels());
            for r in 0..s.height {
                for c in 0..s.width {
                    let m = (r % o.height) * o.width + c % o.width;
                    let kk = sp.response[r * s.width + c];
                    u_hat.push(kk.conj() * v_hat[m] / denom(sp.gram[m]));
                }
            }
            out.set_channel(k, &sp.full.inverse_real(u_hat));
        }
        out
    }

    /// Same map as [`apply_pinv`](Self::apply_pinv) computed by conjugate
    /// gradients on `(A A^T + reg I) w = v`, then `A^T w`.
    pub fn apply_pinv_cg(&self, v: &Image<T>, reg: T, options: CgOptions) -> Result<Image<T>> {
        v.expect_shape(self.output_shape)?;
        check_reg(reg)?;
        let o = self.output_shape;
        let normal = |w: &[T]| -> Result<Vec<T>> {
            let w = Image::from_raw(o, w.to_vec());
            let mut aat = self.apply(&self.apply_transpose(&w)?)?;
            if reg != T::zero() {
                aat.axpy(reg, &w)?;
            }
            Ok(aat.into_data())
        };
        let sol = conjugate_gradient(normal, v.data(), options)?;
        self.apply_transpose(&Image::from_raw(o, sol.x))
    }

    /// Back-projection direction `A^dagger (A x - y)` with optional Tikhonov `reg`.
    pub fn bp_gradient(&self, x: &Image<T>, y: &Image<T>, reg: T) -> Result<Image<T>> {
        let r = self.apply(x)?.sub(y)?;
        self.apply_pinv(&r, reg)
    }

    /// Least-squares gradient `A^T (A x - y)`.
    pub fn ls_gradient(&self, x: &Image<T>, y: &Image<T>) -> Result<Image<T>> {
        let r = self.apply(x)?.sub(y)?;
        self.apply_transpose(&r)
    }

    /// One-line description used in manifests and logs.
    pub fn describe(&self) -> String {
        match &self.kind {
            OperatorKind::SuperResolution { factor } => {
                format!("super-resolution factor={factor} input={}", self.input_shape)
            }
            OperatorKind::Blur { kernel } => format!(
                "blur kernel={}x{} input={}",
                kernel.rows(),
                kernel.cols(),
                self.input_shape
            ),
            OperatorKind::Inpaint { mask } => format!(
                "inpaint kept={}/{} input={}",
                mask.kept_count(),
                mask.kept().len(),
                self.input_shape
            ),
            OperatorKind::Matrix { rows, cols, .. } => format!("matrix {rows}x{cols}"),
        }
    }
}

#[inline]
/// `dst(r, c) += weight * src(r + dr, c + dc)` with periodic wrap.
fn shifted_axpy<T: Scalar>(dst: &mut [T], src: &[T], s: Shape, dr: isize, dc: isize, weight: T) {
    let row_len = s.width * s.channels;
    let split = wrap(0, dc, s.width) * s.channels;
    for r in 0..s.height {
        let sr = wrap(r, dr, s.height);
        let src_row = &src[sr * row_len..(sr + 1) * row_len];
        let dst_row = &mut dst[r * row_len..(r + 1) * row_len];
        let (head, tail) = dst_row.split_at_mut(row_len - split);
        for (d, &v) in head.iter_mut().zip(&src_row[split..]) {
            *d += weight * v;
        }
        for (d, &v) in tail.iter_mut().zip(&src_row[..split]) {
            *d += weight * v;
        }
    }
}

fn wrap(base: usize, offset: isize, n: usize) -> usize {
    (base as isize + offset).rem_euclid(n as isize) as usize
}

fn check_reg<T: Scalar>(reg: T) -> Result<()> {
    if !(reg >= T::zero()) || !reg.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "regularisation must be finite and >= 0, got {reg}"
        )));
    }
    Ok(())
}

/// `A x + sigma_y z` with `z` drawn from the measurement substream of `seed`.
pub fn degrade<T: Scalar>(op: &LinearOperator<T>, x: &Image<T>, sigma_y: T, seed: u64) -> Result<Image<T>> {
    if !(sigma_y >= T::zero()) {
        return Err(Error::InvalidParameter(format!("sigma_y must be >= 0, got {sigma_y}")));
    }
    let mut y = op.apply(x)?;
    if sigma_y > T::zero() {
        let z = NoiseStreams::new(seed).gaussian(op.output_shape(), 0, Purpose::Measurement);
        y.axpy(sigma_y, &z)?;
    }
    Ok(y)
}
