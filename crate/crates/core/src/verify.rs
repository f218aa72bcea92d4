//! Self-check battery: operator identities, denoiser posterior means and the
//! marginal-preservation property of the signed noise injection.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::denoise::{Denoiser, GaussianPrior};
use crate::error::Result;
use crate::image::{Image, Shape};
use crate::ops::OperatorKind;
use crate::ops::{CgOptions, InpaintMask, LinearOperator};
use crate::rng::{NoiseStreams, Purpose};
use crate::sampler::{verify_proposition1, Fault, MonteCarloOptions, NoiseSign};
use crate::schedule::{build_schedule, presets, ScheduleParams};

/// `|<Ax, v> - <x, A^T v>| / (||Ax|| ||v||)`.
pub const ADJOINT_TOLERANCE: f64 = 1e-10;
/// `||A A^dagger v - v|| / ||v||` at zero regularization.
pub const PINV_TOLERANCE: f64 = 1e-8;
/// `||pinv_fft(v) - pinv_cg(v)|| / ||pinv_fft(v)||`.
pub const CG_AGREEMENT_TOLERANCE: f64 = 1e-5;
/// Monte Carlo checks pass within this many standard errors.
pub const Z_THRESHOLD: f64 = 3.0;

/// Smallest back-projection regularisation `sigma_y^2 zeta` among the
/// deblurring presets. The unregularised 9x9 std-3 blur has Gram eigenvalues
/// down to ~1e-10, beyond what plain CG resolves, so the FFT-vs-CG
/// comparison for blur runs at this operating point.
pub fn deblur_reg() -> f64 {
    presets::ROWS
        .iter()
        .filter_map(|r| r.zeta.map(|z| r.sigma_y * r.sigma_y * z))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Side of the square test images. Must be a multiple of 4.
    pub size: usize,
    /// Random instances per operator.
    pub instances: usize,
    /// Monte Carlo draws per check.
    pub samples: usize,
    pub seed: u64,
    pub schedule: ScheduleParams,
    pub etas: Vec<f64>,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            size: 32,
            instances: 5,
            samples: 100_000,
            seed: 0,
            schedule: ScheduleParams::default(),
            etas: vec![0.0, 0.1, 0.5, 1.0],
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed statistic.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: impl Into<String>, worst: f64, tolerance: f64) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed: worst <= tolerance,
            worst,
            tolerance,
        });
    }
}

/// The three standard operators on a `size x size` RGB image: 4x bicubic
/// downsampling, 9x9 Gaussian blur with std 3, and inpainting with 80% of
/// pixels missing.
pub fn standard_operators(size: usize, seed: u64) -> Result<Vec<(&'static str, LinearOperator<f64>)>> {
    let shape = Shape::new(size, size, 3);
    Ok(vec![
        ("sr4", LinearOperator::super_resolution(shape, 4)?),
        ("gblur", LinearOperator::gaussian_blur(shape, 9, 3.0)?),
        (
            "inpaint",
            LinearOperator::inpaint(shape, InpaintMask::random(size, size, 0.2, seed)?)?,
        ),
    ])
}

fn rel(a: &Image<f64>, b: &Image<f64>) -> Result<f64> {
    Ok(a.sub(b)?.norm() / b.norm())
}

/// Adjoint, `A A^dagger = I` and FFT-vs-CG checks for one operator instance.
/// The comparison uses `v = A x`; blur runs at [`deblur_reg`].
/// Returns `(adjoint, pinv, cg)` errors.
pub fn operator_errors(op: &LinearOperator<f64>, seed: u64) -> Result<(f64, f64, f64)> {
    let streams = NoiseStreams::new(seed);
    let x: Image<f64> = streams.gaussian(op.input_shape(), 0, Purpose::Synthetic);
    let v: Image<f64> = streams.gaussian(op.output_shape(), 1, Purpose::Synthetic);
    let ax = op.apply(&x)?;
    let atv = op.apply_transpose(&v)?;
    let adjoint = (ax.dot(&v)? - x.dot(&atv)?).abs() / (ax.norm() * v.norm());
    let pinv = rel(&op.apply(&op.apply_pinv(&v, 0.0)?)?, &v)?;
    let reg = match op.kind() {
        OperatorKind::Blur { .. } => deblur_reg(),
        _ => 0.0,
    };
    let fft = op.apply_pinv(&ax, reg)?;
    let cg_opts = CgOptions {
        tolerance: 1e-13,
        max_iterations: Some(20 * op.output_shape().len()),
    };
    let cg = op.apply_pinv_cg(&ax, reg, cg_opts)?;
    Ok((adjoint, pinv, rel(&cg, &fft)?))
}

/// Self-normalized importance estimate of `E[x0 | x0 + sigma z = x]` for each
/// coordinate of `x` under the prior `N(prior_mean, prior_std^2)`. Proposals
/// come from the narrower of the prior and the likelihood and are weighted by
/// the other density. Returns `(estimate, standard error)` per coordinate.
pub fn posterior_mean_monte_carlo(
    prior_mean: f64,
    prior_std: f64,
    sigma: f64,
    x: &[f64],
    samples: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let mut rng = NoiseStreams::new(seed).rng(0, Purpose::MonteCarlo);
    let z: Vec<f64> = (0..samples).map(|_| StandardNormal.sample(&mut rng)).collect();
    x.iter()
        .map(|&xs| {
            let (centre, spread, other_centre, other_spread) = if sigma < prior_std {
                (xs, sigma, prior_mean, prior_std)
            } else {
                (prior_mean, prior_std, xs, sigma)
            };
            let draws: Vec<f64> = z.iter().map(|z| centre + spread * z).collect();
            let logw: Vec<f64> = draws
                .iter()
                .map(|d| -(d - other_centre).powi(2) / (2.0 * other_spread * other_spread))
                .collect();
            let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = w.iter().sum();
            let est = w.iter().zip(&draws).map(|(w, d)| w * d).sum::<f64>() / total;
            let var = w.iter().zip(&draws).map(|(w, d)| (w * (d - est)).powi(2)).sum::<f64>();
            (est, var.sqrt() / total)
        })
        .collect()
}

/// Largest `|analytic - monte carlo| / se` for the Gaussian-prior denoiser at
/// noise level `sigma`, probed at a few points across the marginal.
pub fn tweedie_z(sigma: f64, samples: usize, seed: u64) -> Result<f64> {
    let (m, s) = (0.5, 0.25);
    let spread = (s * s + sigma * sigma).sqrt();
    let probes: Vec<f64> = [-1.5, -0.5, 0.0, 0.75, 2.0].iter().map(|k| m + k * spread).collect();
    let shape = Shape::new(1, probes.len(), 1);
    let mut prior = GaussianPrior::uniform(shape, m, s)?;
    let analytic = prior.denoise(&Image::new(shape, probes.clone())?, sigma)?;
    let mc = posterior_mean_monte_carlo(m, s, sigma, &probes, samples, seed);
    Ok(analytic
        .data()
        .iter()
        .zip(&mc)
        .map(|(a, (e, se))| (a - e).abs() / se)
        .fold(0.0, f64::max))
}

/// Runs every check and collects the results.
pub fn run(options: &VerifyOptions) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    for (i, (name, _)) in standard_operators(options.size, options.seed)?.iter().enumerate() {
        let (mut adj, mut pinv, mut cg) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..options.instances {
            let seed = options.seed.wrapping_add((i * 1000 + k) as u64);
            let ops = standard_operators(options.size, seed)?;
            let (a, p, c) = operator_errors(&ops[i].1, seed)?;
            adj = adj.max(a);
            pinv = pinv.max(p);
            cg = cg.max(c);
        }
        report.push(format!("{name} adjoint"), adj, ADJOINT_TOLERANCE);
        report.push(format!("{name} pseudoinverse"), pinv, PINV_TOLERANCE);
        report.push(format!("{name} fft-vs-cg"), cg, CG_AGREEMENT_TOLERANCE);
    }
    for (k, sigma) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let z = tweedie_z(sigma, options.samples, options.seed.wrapping_add(k as u64))?;
        report.push(format!("tweedie sigma={sigma}"), z, Z_THRESHOLD);
    }
    let schedule = build_schedule::<f64>(&options.schedule)?;
    let x0 = Image::new(Shape::new(1, 1, 1), vec![0.3])?;
    for &eta in &options.etas {
        for sign in [NoiseSign::Negated, NoiseSign::Ddim] {
            let mc = MonteCarloOptions {
                samples: options.samples,
                seed: options.seed,
                z_threshold: Z_THRESHOLD,
                fault: options.fault,
            };
            let stats = verify_proposition1(&x0, &schedule, eta, sign, &mc)?;
            let worst = stats
                .iter()
                .map(|s| s.max_mean_z.max(s.max_variance_z))
                .fold(0.0, f64::max);
            report.push(format!("marginal eta={eta} xi={:+}", sign.xi()), worst, Z_THRESHOLD);
        }
    }
    Ok(report)
}
