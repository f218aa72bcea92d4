//! On-disk layout of one degraded image.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cm4ir::io::{load_image, save_image, write_raw};
use cm4ir::{Image64, Operator64, Shape};
use serde::{Deserialize, Serialize};

use crate::config::{parse_task, RunConfig, Task};
use crate::setup;

pub const MEASUREMENT: &str = "y.cmt";
pub const PREVIEW: &str = "preview.png";
pub const MASK: &str = "mask.png";
pub const OPERATOR: &str = "operator.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub task: String,
    pub input_shape: Shape,
    pub output_shape: Shape,
    pub sigma_y: f64,
    pub seed: u64,
    pub description: String,
    /// Mask file next to the measurement, inpainting only.
    pub mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Full configuration text in `key = value` form.
    pub config: String,
    pub source: PathBuf,
    pub index: usize,
    /// Seed of this image: configured seed plus `index`.
    pub seed: u64,
}

pub struct Measurement {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub record: OperatorRecord,
    pub op: Operator64,
    pub y: Image64,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Degrades `source` and writes the measurement files into `dir`.
pub fn write(config: &RunConfig, source: &Path, index: usize, dir: &Path) -> Result<Measurement> {
    let x: Image64 = load_image(source).with_context(|| format!("reading {}", source.display()))?;
    let seed = config.seed.wrapping_add(index as u64);
    let op = setup::operator(&config.task, x.shape(), seed)?;
    let y = cm4ir::degrade(&op, &x, config.sigma_y, seed)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    write_raw(&y, dir.join(MEASUREMENT))?;
    let reg = config.sigma_y * config.sigma_y * config.zeta;
    save_image(&op.apply_pinv(&y, reg)?, dir.join(PREVIEW))?;
    let mask = match op.mask() {
        Some(m) => {
            save_image(&m.to_image::<f64>(), dir.join(MASK))?;
            Some(MASK.to_string())
        }
        None => None,
    };
    let record = OperatorRecord {
        task: config.task.to_string(),
        input_shape: op.input_shape(),
        output_shape: op.output_shape(),
        sigma_y: config.sigma_y,
        seed,
        description: op.describe(),
        mask,
    };
    let manifest = Manifest {
        config: config.serialize(),
        source: source.to_path_buf(),
        index,
        seed,
    };
    write_json(&record, &dir.join(OPERATOR))?;
    write_json(&manifest, &dir.join(MANIFEST))?;
    Ok(Measurement {
        dir: dir.to_path_buf(),
        manifest,
        record,
        op,
        y,
    })
}

pub fn is_measurement_dir(dir: &Path) -> bool {
    dir.join(MANIFEST).is_file()
}

/// Reads a measurement directory and rebuilds its operator, checking that
/// the pieces agree with each other.
pub fn read(dir: &Path) -> Result<Measurement> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let record: OperatorRecord = read_json(&dir.join(OPERATOR))?;
    let y: Image64 =
        load_image(dir.join(MEASUREMENT)).with_context(|| format!("reading {}", dir.join(MEASUREMENT).display()))?;
    let recorded = RunConfig::parse(&manifest.config).context("manifest config")?;
    if recorded.task.to_string() != record.task || recorded.sigma_y != record.sigma_y || manifest.seed != record.seed {
        bail!(
            "{}: manifest (task {}, sigma_y {}, seed {}) does not match operator (task {}, sigma_y {}, seed {})",
            dir.display(),
            recorded.task,
            recorded.sigma_y,
            manifest.seed,
            record.task,
            record.sigma_y,
            record.seed
        );
    }
    let task = match (parse_task(&record.task)?, &record.mask) {
        (Task::InpaintRandom(_) | Task::InpaintMask(_), Some(mask)) => Task::InpaintMask(dir.join(mask)),
        (Task::InpaintRandom(_) | Task::InpaintMask(_), None) => {
            bail!("{}: inpainting operator without a mask", dir.display())
        }
        (task, _) => task,
    };
    let op = setup::operator(&task, record.input_shape, record.seed)?;
    if op.output_shape() != record.output_shape || y.shape() != record.output_shape {
        bail!(
            "{}: measurement shape {} does not match operator output {} (recorded {})",
            dir.display(),
            y.shape(),
            op.output_shape(),
            record.output_shape
        );
    }
    Ok(Measurement {
        dir: dir.to_path_buf(),
        manifest,
        record,
        op,
        y,
    })
}
