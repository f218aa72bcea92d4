//! `restore`: runs the sampler on stored measurements.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cm4ir::io::{load_image, save_image, write_raw};
use cm4ir::sampler::{nfe_count, restore};
use cm4ir::{Image64, MetricReport, PsnrOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::measurement::{self, write_json, Measurement};
use crate::setup;

pub const RESTORED_PNG: &str = "restored.png";
pub const RESTORED_RAW: &str = "restored.cmt";
pub const REPORT: &str = "report.json";

#[derive(Debug, Serialize)]
pub struct Report {
    pub measurement: PathBuf,
    pub variant: String,
    pub seed: u64,
    pub nfe_count: usize,
    pub psnr_db: Option<f64>,
    pub residual_norm: f64,
    pub clipped_before_scoring: bool,
    pub ground_truth: Option<PathBuf>,
    pub config: String,
}

/// Measurement directories under `input`: itself, or its immediate children.
pub fn measurement_dirs(input: &Path) -> Result<Vec<PathBuf>> {
    if measurement::is_measurement_dir(input) {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(input).with_context(|| format!("listing {}", input.display()))? {
        let path = entry?.path();
        if path.is_dir() && measurement::is_measurement_dir(&path) {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        bail!("{} holds no measurements", input.display());
    }
    Ok(dirs)
}

/// Measurement config with its paths cleared, ready for overrides.
pub fn base_config(m: &Measurement) -> Result<RunConfig> {
    let mut c = RunConfig::parse(&m.manifest.config)?;
    c.input = None;
    c.output = None;
    c.ground_truth = None;
    Ok(c)
}

pub fn run_one(m: &Measurement, config: &RunConfig, out_dir: &Path) -> Result<Report> {
    let task = config.task.to_string();
    if task != m.record.task || config.sigma_y != m.record.sigma_y {
        bail!(
            "{}: config asks for task {task} at sigma_y {}, measurement was made with task {} at sigma_y {}",
            m.dir.display(),
            config.sigma_y,
            m.record.task,
            m.record.sigma_y
        );
    }
    let ground_truth = config.ground_truth.as_ref().map(|gt| {
        if gt.is_dir() {
            gt.join(m.manifest.source.file_name().unwrap_or_default())
        } else {
            gt.clone()
        }
    });
    let truth: Option<Image64> = match &ground_truth {
        Some(p) => Some(load_image(p).with_context(|| format!("reading ground truth {}", p.display()))?),
        None => None,
    };

    let mut denoiser = setup::denoiser(&config.denoiser)?;
    let sampler = setup::sampler(config, m.manifest.seed)?;
    let restored = restore(&m.op, &m.y, &mut denoiser, &sampler)
        .with_context(|| format!("restoring {}", m.dir.display()))?
        .image;
    let metrics = MetricReport::evaluate(&m.op, &m.y, &restored, truth.as_ref(), PsnrOptions::default())?;

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    save_image(&restored, out_dir.join(RESTORED_PNG))?;
    write_raw(&restored, out_dir.join(RESTORED_RAW))?;
    let report = Report {
        measurement: m.dir.clone(),
        variant: config.variant.as_str().to_string(),
        seed: m.manifest.seed,
        nfe_count: nfe_count(config.steps),
        psnr_db: metrics.psnr_db,
        residual_norm: metrics.residual_norm,
        clipped_before_scoring: metrics.clipped_before_scoring,
        ground_truth,
        config: config.serialize(),
    };
    write_json(&report, &out_dir.join(REPORT))?;
    Ok(report)
}

/// Restores every measurement under `input`. `configure` layers overrides on
/// each measurement's own config.
pub fn run(
    input: &Path,
    workers: usize,
    configure: impl Fn(RunConfig) -> Result<RunConfig> + Sync,
) -> Result<Vec<Report>> {
    let dirs = measurement_dirs(input)?;
    let single = dirs.len() == 1 && dirs[0] == input;
    let job = |dir: &PathBuf| -> Result<Report> {
        let m = measurement::read(dir)?;
        let config = configure(base_config(&m)?)?;
        let out_dir = match &config.output {
            Some(out) if single => out.clone(),
            Some(out) => out.join(dir.file_name().unwrap_or_default()),
            None => dir.clone(),
        };
        run_one(&m, &config, &out_dir)
    };
    setup::thread_pool(workers)?.install(|| dirs.par_iter().map(job).collect())
}
