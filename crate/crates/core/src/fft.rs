//! Planned 2-D DFTs over single-channel planes.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Scalar;

/// Unnormalised forward / inverse 2-D DFT for a fixed `rows x cols` grid.
/// Plans are immutable and shareable across threads.
#[derive(Clone)]
pub struct Fft2<T: Scalar> {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl<T: Scalar> Fft2<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward_real(&self, plane: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = plane.iter().map(|&re| Complex::new(re, T::zero())).collect();
        self.forward(&mut buf);
        buf
    }

    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.transform(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1 / (rows * cols)` normalisation,
    /// returning the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex<T>>) -> Vec<T> {
        self.transform(&mut buf, &self.row_inv, &self.col_inv);
        let scale = T::one() / T::of(self.len() as f64);
        buf.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex<T>], row: &Arc<dyn Fft<T>>, col: &Arc<dyn Fft<T>>) {
        debug_assert_eq!(buf.len(), self.len());
        row.process(buf);
        let mut column = vec![Complex::new(T::zero(), T::zero()); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = buf[r * self.cols + c];
            }
            col.process(&mut column);
            for r in 0..self.rows {
                buf[r * self.cols + c] = column[r];
            }
        }
    }
}
