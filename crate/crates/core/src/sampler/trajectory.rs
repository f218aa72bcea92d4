use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::image::Image;
use crate::io::write_raw;
use crate::scalar::Scalar;

/// One sampler step. `estimate_term` holds whatever deterministic direction the
/// variant injects (noise estimate or momentum), `noise_term` the scaled fresh
/// Gaussian; both are absent after the last step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<T> {
    /// Execution index, 0 for the first step.
    pub step: usize,
    /// Descending level index `n = N - step`.
    pub n: usize,
    pub tau: T,
    pub tau_next: T,
    /// Noise level handed to the denoiser.
    pub sigma: T,
    pub x_tau: Image<T>,
    pub x0: Image<T>,
    /// `x0 - mu g`.
    pub guided: Image<T>,
    pub guidance_norm: T,
    pub estimate_term: Option<Image<T>>,
    pub noise_term: Option<Image<T>>,
}

impl<T: Scalar> StepRecord<T> {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        step: usize,
        steps: usize,
        tau: T,
        tau_next: T,
        sigma: T,
        x_tau: &Image<T>,
        x0: &Image<T>,
        guided: &Image<T>,
        g: Option<&Image<T>>,
        estimate_term: Option<Image<T>>,
        noise_term: Option<Image<T>>,
    ) -> Self {
        Self {
            step,
            n: steps - step,
            tau,
            tau_next,
            sigma,
            x_tau: x_tau.clone(),
            x0: x0.clone(),
            guided: guided.clone(),
            guidance_norm: g.map_or_else(T::zero, Image::norm),
            estimate_term,
            noise_term,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory<T> {
    pub steps: Vec<StepRecord<T>>,
}

#[derive(Serialize)]
struct IndexLine<'a> {
    step: usize,
    n: usize,
    tau: f64,
    tau_next: f64,
    sigma: f64,
    guidance_norm: f64,
    estimate_norm: Option<f64>,
    noise_norm: Option<f64>,
    files: Vec<(&'a str, String)>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Writes one raw tensor per quantity per step and an `index.jsonl`
    /// with one line of metadata per step.
    pub fn dump(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut index = BufWriter::new(File::create(dir.join("index.jsonl"))?);
        for s in &self.steps {
            let mut files = Vec::new();
            let mut put = |name: &'static str, img: &Image<T>| -> Result<()> {
                let file = format!("step{:03}_{name}.cmt", s.step);
                write_raw(img, dir.join(&file))?;
                files.push((name, file));
                Ok(())
            };
            put("x_tau", &s.x_tau)?;
            put("x0", &s.x0)?;
            put("guided", &s.guided)?;
            if let Some(e) = &s.estimate_term {
                put("estimate", e)?;
            }
            if let Some(z) = &s.noise_term {
                put("noise", z)?;
            }
            let line = IndexLine {
                step: s.step,
                n: s.n,
                tau: s.tau.as_f64(),
                tau_next: s.tau_next.as_f64(),
                sigma: s.sigma.as_f64(),
                guidance_norm: s.guidance_norm.as_f64(),
                estimate_norm: s.estimate_term.as_ref().map(|e| e.norm().as_f64()),
                noise_norm: s.noise_term.as_ref().map(|e| e.norm().as_f64()),
                files,
            };
            serde_json::to_writer(&mut index, &line).map_err(std::io::Error::from)?;
            index.write_all(b"\n")?;
        }
        index.flush()?;
        Ok(())
    }
}
