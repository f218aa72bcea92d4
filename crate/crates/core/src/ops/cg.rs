use crate::error::{Error, Result};
use crate::image::dot;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Stop once `||b - M x|| <= tolerance * ||b||`.
    pub tolerance: f64,
    /// `None` means ten times the system size.
    pub max_iterations: Option<usize>,
}

impl CgOptions {
    pub fn for_scalar<T: Scalar>() -> Self {
        Self {
            tolerance: T::CG_TOLERANCE,
            max_iterations: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients for a symmetric positive (semi-)definite operator.
pub fn conjugate_gradient<T: Scalar>(
    apply: impl Fn(&[T]) -> Result<Vec<T>>,
    b: &[T],
    options: CgOptions,
) -> Result<CgSolution<T>> {
    let n = b.len();
    let max_iter = options.max_iterations.unwrap_or(10 * n.max(1));
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![T::zero(); n];
    if b_norm == T::zero() {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let tol = T::of(options.tolerance) * b_norm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: (rr.sqrt() / b_norm).as_f64(),
            });
        }
        let mp = apply(&p)?;
        let pmp = dot(&p, &mp);
        if !(pmp > T::zero()) {
            break;
        }
        let alpha = rr / pmp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * mp[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol {
        return Ok(CgSolution {
            x,
            iterations: max_iter,
            relative_residual: (rr.sqrt() / b_norm).as_f64(),
        });
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: (rr.sqrt() / b_norm).as_f64(),
    })
}
