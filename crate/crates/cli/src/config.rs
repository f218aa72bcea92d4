//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use cm4ir::schedule::ScheduleParams;

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Sr4,
    Sr2,
    Gblur,
    /// `A = I`, for sanity runs.
    Identity,
    /// Fraction of pixels removed.
    InpaintRandom(f64),
    /// Mask image, nonzero where observed.
    InpaintMask(PathBuf),
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Sr4 => "sr4",
            Task::Sr2 => "sr2",
            Task::Gblur => "gblur",
            Task::Identity => "identity",
            Task::InpaintRandom(_) => "inpaint-random",
            Task::InpaintMask(_) => "inpaint-mask",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::InpaintRandom(p) => write!(f, "inpaint-random({p})"),
            Task::InpaintMask(path) => write!(f, "inpaint-mask({})", path.display()),
            other => f.write_str(other.name()),
        }
    }
}

pub fn parse_task(s: &str) -> Result<Task> {
    let call = |prefix: &str| {
        s.strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('('))
            .and_then(|r| r.strip_suffix(')'))
    };
    Ok(match s {
        "sr4" => Task::Sr4,
        "sr2" => Task::Sr2,
        "gblur" => Task::Gblur,
        "identity" => Task::Identity,
        _ => {
            if let Some(arg) = call("inpaint-random") {
                let p: f64 = arg.parse().with_context(|| format!("bad missing fraction {arg:?}"))?;
                if !(0.0..1.0).contains(&p) {
                    bail!("missing fraction must be in [0, 1), got {p}");
                }
                Task::InpaintRandom(p)
            } else if let Some(arg) = call("inpaint-mask") {
                if arg.is_empty() {
                    bail!("inpaint-mask needs a file");
                }
                Task::InpaintMask(PathBuf::from(arg))
            } else {
                bail!("unknown task {s:?} (sr4, sr2, gblur, identity, inpaint-random(f), inpaint-mask(file))")
            }
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VariantName {
    Cm4ir,
    Baseline,
    DdimSign,
    Polyak,
}

impl VariantName {
    pub const ALL: [VariantName; 4] = [
        VariantName::Cm4ir,
        VariantName::Baseline,
        VariantName::DdimSign,
        VariantName::Polyak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantName::Cm4ir => "cm4ir",
            VariantName::Baseline => "baseline",
            VariantName::DdimSign => "ddim-sign",
            VariantName::Polyak => "polyak",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| anyhow!("unknown variant {s:?} (cm4ir, baseline, ddim-sign, polyak)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PriorMean {
    Constant(f64),
    /// Image file holding the per-pixel mean.
    Image(PathBuf),
}

impl fmt::Display for PriorMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorMean::Constant(m) => write!(f, "{m}"),
            PriorMean::Image(path) => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DenoiserChoice {
    Gaussian { mean: PriorMean, std: f64 },
    Identity,
    Remote(String),
}

impl fmt::Display for DenoiserChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiserChoice::Gaussian { mean, std } => write!(f, "gaussian({mean},{std})"),
            DenoiserChoice::Identity => f.write_str("identity"),
            DenoiserChoice::Remote(e) => write!(f, "remote({e})"),
        }
    }
}

fn parse_denoiser(s: &str) -> Result<DenoiserChoice> {
    if s == "identity" {
        return Ok(DenoiserChoice::Identity);
    }
    if let Some(arg) = s.strip_prefix("gaussian(").and_then(|r| r.strip_suffix(')')) {
        let (mean, std) = arg
            .rsplit_once(',')
            .ok_or_else(|| anyhow!("gaussian(mean,std) takes a mean and a std"))?;
        let std: f64 = std.trim().parse().with_context(|| format!("bad prior std {std:?}"))?;
        if !(std > 0.0) || !std.is_finite() {
            bail!("gaussian prior needs a finite std > 0");
        }
        let mean = match mean.trim() {
            "" => bail!("gaussian prior needs a mean value or image file"),
            m => match m.parse::<f64>() {
                Ok(v) if v.is_finite() => PriorMean::Constant(v),
                Ok(v) => bail!("prior mean must be finite, got {v}"),
                Err(_) => PriorMean::Image(PathBuf::from(m)),
            },
        };
        return Ok(DenoiserChoice::Gaussian { mean, std });
    }
    if let Some(arg) = s.strip_prefix("remote(").and_then(|r| r.strip_suffix(')')) {
        if arg.is_empty() {
            bail!("remote() needs host:port");
        }
        return Ok(DenoiserChoice::Remote(arg.to_string()));
    }
    bail!("unknown denoiser {s:?} (gaussian(mean,std), identity, remote(host:port))")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Guidance {
    Bp,
    Ls,
    None,
}

impl Guidance {
    fn as_str(self) -> &'static str {
        match self {
            Guidance::Bp => "bp",
            Guidance::Ls => "ls",
            Guidance::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub sigma_y: f64,
    pub i_n: usize,
    pub gamma: f64,
    pub steps: usize,
    pub delta: Vec<f64>,
    pub eta: f64,
    pub mu: Vec<f64>,
    pub zeta: f64,
    pub variant: VariantName,
    pub polyak_beta: f64,
    pub guidance: Guidance,
    pub final_bp_correction: bool,
    pub denoiser: DenoiserChoice,
    pub seed: u64,
    pub workers: usize,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::Sr4,
            sigma_y: 0.0,
            i_n: 150,
            gamma: 0.2,
            steps: 4,
            delta: vec![0.0],
            eta: 0.1,
            mu: vec![1.0],
            zeta: 0.0,
            variant: VariantName::Cm4ir,
            polyak_beta: 0.5,
            guidance: Guidance::Bp,
            final_bp_correction: false,
            denoiser: DenoiserChoice::Gaussian {
                mean: PriorMean::Constant(0.5),
                std: 0.2,
            },
            seed: 0,
            workers: 1,
            input: None,
            output: None,
            ground_truth: None,
        }
    }
}

pub const KEYS: [&str; 19] = [
    "task",
    "sigma_y",
    "i_n",
    "gamma",
    "steps",
    "delta",
    "eta",
    "mu",
    "zeta",
    "variant",
    "polyak_beta",
    "guidance",
    "final_bp_correction",
    "denoiser",
    "seed",
    "workers",
    "input",
    "output",
    "ground_truth",
];

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            p.parse::<f64>().with_context(|| format!("bad number {p:?}"))
        })
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .parse::<T>()
        .with_context(|| format!("{key}: cannot parse {value:?}"))
}

fn in_range(key: &str, v: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(v >= lo && v <= hi) {
        bail!("{key} = {v} outside [{lo}, {hi}]");
    }
    Ok(v)
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Sets one key. Values are validated here so every entry point shares
    /// the same ranges.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "task" => self.task = parse_task(value)?,
            "sigma_y" => self.sigma_y = in_range(key, number(key, value)?, 0.0, 1.0)?,
            "i_n" => {
                let i: usize = number(key, value)?;
                if !(1..=1000).contains(&i) {
                    bail!("i_n = {i} outside [1, 1000]");
                }
                self.i_n = i;
            }
            "gamma" => self.gamma = in_range(key, number(key, value)?, f64::MIN_POSITIVE, 100.0)?,
            "steps" => {
                let n: usize = number(key, value)?;
                if !(1..=1000).contains(&n) {
                    bail!("steps = {n} outside [1, 1000]");
                }
                self.steps = n;
            }
            "delta" => {
                let d = parse_list(value)?;
                for v in &d {
                    in_range(key, *v, 0.0, 10.0)?;
                }
                self.delta = d;
            }
            "eta" => self.eta = in_range(key, number(key, value)?, 0.0, 1.0)?,
            "mu" => {
                let m = parse_list(value)?;
                for v in &m {
                    in_range(key, *v, 0.0, 10.0)?;
                }
                self.mu = m;
            }
            "zeta" => self.zeta = in_range(key, number(key, value)?, 0.0, 1e6)?,
            "variant" => self.variant = VariantName::parse(value)?,
            "polyak_beta" => self.polyak_beta = in_range(key, number(key, value)?, 0.0, 1.0)?,
            "guidance" => {
                self.guidance = match value {
                    "bp" => Guidance::Bp,
                    "ls" => Guidance::Ls,
                    "none" => Guidance::None,
                    _ => bail!("guidance must be bp, ls or none, got {value:?}"),
                }
            }
            "final_bp_correction" => self.final_bp_correction = number(key, value)?,
            "denoiser" => self.denoiser = parse_denoiser(value)?,
            "seed" => self.seed = number(key, value)?,
            "workers" => {
                let w: usize = number(key, value)?;
                if w == 0 {
                    bail!("workers must be at least 1");
                }
                self.workers = w;
            }
            "input" => self.input = optional_path(value),
            "output" => self.output = optional_path(value),
            "ground_truth" => self.ground_truth = optional_path(value),
            _ => bail!("unknown key {key:?}"),
        }
        Ok(())
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are skipped;
    /// unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Sets only the keys present in `text`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                bail!("line {}: {key} given twice", n + 1);
            }
            self.set(key, value).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "task" => self.task.to_string(),
            "sigma_y" => self.sigma_y.to_string(),
            "i_n" => self.i_n.to_string(),
            "gamma" => self.gamma.to_string(),
            "steps" => self.steps.to_string(),
            "delta" => join(&self.delta),
            "eta" => self.eta.to_string(),
            "mu" => join(&self.mu),
            "zeta" => self.zeta.to_string(),
            "variant" => self.variant.as_str().to_string(),
            "polyak_beta" => self.polyak_beta.to_string(),
            "guidance" => self.guidance.as_str().to_string(),
            "final_bp_correction" => self.final_bp_correction.to_string(),
            "denoiser" => self.denoiser.to_string(),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "input" => path(&self.input),
            "output" => path(&self.output),
            "ground_truth" => path(&self.ground_truth),
            _ => return None,
        })
    }

    /// One `key = value` line per key, in a fixed order.
    pub fn serialize(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Checks constraints that span several keys.
    pub fn validate(&self) -> Result<()> {
        cm4ir::build_schedule::<f64>(&self.schedule_params()).map_err(|e| anyhow!("schedule: {e}"))?;
        Ok(())
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            i_n: self.i_n,
            gamma: self.gamma,
            steps: self.steps,
            delta: self.delta.clone(),
            eta: self.eta,
            mu: self.mu.clone(),
            zeta: self.zeta,
            reverse_delta: false,
        }
    }
}
