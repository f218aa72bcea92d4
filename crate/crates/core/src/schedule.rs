//! Noise-level schedules.
//!
//! The DDPM table `alpha_bar_i = prod_{j<=i} (1 - beta_j)` with `beta` linear
//! from 1e-4 to 0.02 over 1000 steps supplies the starting level; later levels
//! grow geometrically, `alpha_bar_{n-1} = min(alpha_bar_n (1 + gamma), 0.999)`,
//! and each step runs at `tau_n = sqrt(1 - alpha_bar_n)`.
//!
//! Per-step vectors are stored in execution order: index 0 is the first step
//! taken (largest `tau`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TRAIN_STEPS: usize = 1000;
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;
pub const ALPHA_BAR_MAX: f64 = 0.999;

/// `alpha_bar_1 .. alpha_bar_1000`, strictly decreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaBarTable {
    values: Vec<f64>,
}

impl AlphaBarTable {
    /// 1-based lookup, `1 <= index <= 1000`.
    pub fn get(&self, index: usize) -> Option<f64> {
        index.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn beta(index: usize) -> f64 {
    BETA_START + (index - 1) as f64 * (BETA_END - BETA_START) / (TRAIN_STEPS - 1) as f64
}

pub fn build_alpha_bar_table() -> AlphaBarTable {
    let mut values = Vec::with_capacity(TRAIN_STEPS);
    let mut acc = 1.0;
    for i in 1..=TRAIN_STEPS {
        acc *= 1.0 - beta(i);
        values.push(acc);
    }
    AlphaBarTable { values }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    /// 1-based index into the DDPM table giving `alpha_bar_N`.
    pub i_n: usize,
    pub gamma: f64,
    pub steps: usize,
    /// Denoiser level inflation per step; a single value is broadcast.
    pub delta: Vec<f64>,
    pub eta: f64,
    /// Guidance step size per step; a single value is broadcast.
    pub mu: Vec<f64>,
    pub zeta: f64,
    /// Pair the first listed `delta` with the last executed step instead of the first.
    pub reverse_delta: bool,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            i_n: 150,
            gamma: 0.2,
            steps: 4,
            delta: vec![0.0],
            eta: 0.1,
            mu: vec![1.0],
            zeta: 0.0,
            reverse_delta: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    alpha_bar: Vec<T>,
    tau: Vec<T>,
    delta: Vec<T>,
    mu: Vec<T>,
    eta: T,
    zeta: T,
}

fn broadcast(name: &str, v: &[f64], n: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        len if len == n => Ok(v.to_vec()),
        len => Err(Error::InvalidParameter(format!(
            "{name} has {len} entries for {n} steps"
        ))),
    }
}

pub fn build_schedule<T: Scalar>(params: &ScheduleParams) -> Result<Schedule<T>> {
    let n = params.steps;
    if n < 1 {
        return Err(Error::InvalidParameter("schedule needs at least one step".into()));
    }
    if !(params.gamma > 0.0) || !params.gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be > 0, got {}",
            params.gamma
        )));
    }
    let table = build_alpha_bar_table();
    let start = table
        .get(params.i_n)
        .ok_or_else(|| Error::InvalidParameter(format!("i_N = {} outside 1..=1000", params.i_n)))?;
    if start > ALPHA_BAR_MAX {
        return Err(Error::InvalidParameter(format!(
            "i_N = {} gives alpha_bar {start} above the clip level {ALPHA_BAR_MAX}",
            params.i_n
        )));
    }
    let mut alpha_bar = Vec::with_capacity(n);
    let mut a = start;
    alpha_bar.push(a);
    for _ in 1..n {
        a = (a * (1.0 + params.gamma)).min(ALPHA_BAR_MAX);
        alpha_bar.push(a);
    }
    let mut delta = broadcast("delta", &params.delta, n)?;
    if params.reverse_delta {
        delta.reverse();
    }
    let mu = broadcast("mu", &params.mu, n)?;
    Schedule::from_alpha_bar(&alpha_bar, &delta, &mu, params.eta, params.zeta)
}

impl<T: Scalar> Schedule<T> {
    /// Builds a schedule from explicit `alpha_bar` values in execution order.
    pub fn from_alpha_bar(alpha_bar: &[f64], delta: &[f64], mu: &[f64], eta: f64, zeta: f64) -> Result<Self> {
        let n = alpha_bar.len();
        if n == 0 {
            return Err(Error::InvalidParameter("schedule needs at least one step".into()));
        }
        if delta.len() != n || mu.len() != n {
            return Err(Error::InvalidParameter(format!(
                "delta ({}) and mu ({}) must have {n} entries",
                delta.len(),
                mu.len()
            )));
        }
        if let Some(a) = alpha_bar.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidParameter(format!("alpha_bar {a} outside (0, 1)")));
        }
        if let Some(d) = delta.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta {d} must be finite and >= 0")));
        }
        if let Some(m) = mu.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu {m} must be finite")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!("eta {eta} outside [0, 1]")));
        }
        if !(zeta >= 0.0) || !zeta.is_finite() {
            return Err(Error::InvalidParameter(format!("zeta {zeta} must be finite and >= 0")));
        }
        let conv = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        Ok(Self {
            alpha_bar: conv(alpha_bar),
            tau: alpha_bar.iter().map(|&a| T::of((1.0 - a).sqrt())).collect(),
            delta: conv(delta),
            mu: conv(mu),
            eta: T::of(eta),
            zeta: T::of(zeta),
        })
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn alpha_bar(&self) -> &[T] {
        &self.alpha_bar
    }

    pub fn tau(&self) -> &[T] {
        &self.tau
    }

    /// Level injected after step `k`: `tau` of the following step, zero after the last.
    pub fn tau_next(&self, k: usize) -> T {
        self.tau.get(k + 1).copied().unwrap_or_else(T::zero)
    }

    pub fn delta(&self) -> &[T] {
        &self.delta
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn zeta(&self) -> T {
        self.zeta
    }

    pub fn with_eta(mut self, eta: T) -> Result<Self> {
        if !(eta >= T::zero() && eta <= T::one()) {
            return Err(Error::InvalidParameter(format!("eta {eta} outside [0, 1]")));
        }
        self.eta = eta;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: Vec<T>) -> Result<Self> {
        if delta.len() != self.len() || delta.iter().any(|d| !(*d >= T::zero())) {
            return Err(Error::InvalidParameter(
                "delta must have one entry >= 0 per step".into(),
            ));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn with_mu(mut self, mu: Vec<T>) -> Result<Self> {
        if mu.len() != self.len() {
            return Err(Error::InvalidParameter("mu must have one entry per step".into()));
        }
        self.mu = mu;
        Ok(self)
    }
}

/// Published per-task hyperparameters for four-step restoration.
pub mod presets {
    use super::ScheduleParams;

    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct HyperparameterRow {
        pub task: &'static str,
        pub dataset: &'static str,
        pub sigma_y: f64,
        pub eta: f64,
        pub i_n: usize,
        pub gamma: f64,
        pub zeta: Option<f64>,
        pub delta: [f64; 4],
    }

    impl HyperparameterRow {
        pub fn params(&self) -> ScheduleParams {
            ScheduleParams {
                i_n: self.i_n,
                gamma: self.gamma,
                steps: 4,
                delta: self.delta.to_vec(),
                eta: self.eta,
                mu: vec![1.0],
                zeta: self.zeta.unwrap_or(0.0),
                reverse_delta: false,
            }
        }
    }

    const fn row(
        task: &'static str,
        dataset: &'static str,
        sigma_y: f64,
        i_n: usize,
        gamma: f64,
        zeta: Option<f64>,
        delta: [f64; 4],
    ) -> HyperparameterRow {
        HyperparameterRow {
            task,
            dataset,
            sigma_y,
            eta: 0.1,
            i_n,
            gamma,
            zeta,
            delta,
        }
    }

    pub const ROWS: &[HyperparameterRow] = &[
        row("sr4", "bedroom", 0.025, 400, 0.7, None, [0.0, 0.5, 0.1, 0.0]),
        row("sr4", "cat", 0.025, 400, 0.7, None, [0.0, 0.3, 0.0, 0.0]),
        row("sr4", "bedroom", 0.05, 250, 0.2, None, [0.0, 0.3, 0.05, 0.1]),
        row("sr4", "cat", 0.05, 250, 0.2, None, [0.1, 0.1, 0.0, 0.0]),
        row("gblur", "bedroom", 0.025, 90, 0.02, Some(3.0), [0.0; 4]),
        row("gblur", "cat", 0.025, 100, 0.03, Some(4.0), [0.0; 4]),
        row("gblur", "bedroom", 0.05, 160, 0.07, Some(1.5), [0.0; 4]),
        row("gblur", "cat", 0.05, 180, 0.1, Some(2.0), [0.0; 4]),
        row("inpaint", "bedroom", 0.0, 150, 0.2, None, [0.1, 0.1, 0.8, 0.8]),
        row("inpaint", "bedroom", 0.025, 150, 0.2, None, [0.2, 0.3, 0.8, 0.8]),
        row("inpaint", "cat", 0.025, 150, 0.2, None, [0.0, 0.0, 1.0, 1.0]),
        row("inpaint", "bedroom", 0.05, 150, 0.2, None, [0.2, 0.1, 1.0, 1.0]),
        row("inpaint", "cat", 0.05, 150, 0.2, None, [0.0, 0.0, 1.0, 1.0]),
    ];

    pub fn find(task: &str, dataset: &str, sigma_y: f64) -> Option<&'static HyperparameterRow> {
        ROWS.iter()
            .find(|r| r.task == task && r.dataset == dataset && (r.sigma_y - sigma_y).abs() < 1e-12)
    }
}
