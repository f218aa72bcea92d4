//! `ablate`: every listed variant on every image, with shared seeds.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use cm4ir::io::load_image;
use cm4ir::sampler::{nfe_count, restore};
use cm4ir::{Image64, MetricReport, PsnrOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, VariantName};
use crate::measurement::write_json;
use crate::{setup, InvariantFailure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationVariant {
    Cm4ir,
    /// `eta = 1`, `delta = 0`
    #[value(name = "eta1-delta0")]
    #[serde(rename = "eta1-delta0")]
    Eta1Delta0,
    DdimSign,
    Polyak,
    Baseline,
}

impl AblationVariant {
    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Cm4ir => "cm4ir",
            AblationVariant::Eta1Delta0 => "eta1-delta0",
            AblationVariant::DdimSign => "ddim-sign",
            AblationVariant::Polyak => "polyak",
            AblationVariant::Baseline => "baseline",
        }
    }

    pub fn configure(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            AblationVariant::Cm4ir => c.variant = VariantName::Cm4ir,
            AblationVariant::Eta1Delta0 => {
                c.variant = VariantName::Cm4ir;
                c.eta = 1.0;
                c.delta = vec![0.0];
            }
            AblationVariant::DdimSign => c.variant = VariantName::DdimSign,
            AblationVariant::Polyak => c.variant = VariantName::Polyak,
            AblationVariant::Baseline => c.variant = VariantName::Baseline,
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub variant: &'static str,
    pub psnr_mean: f64,
    pub residual_mean: f64,
    pub nfe_count: usize,
}

#[derive(Serialize)]
struct AblationManifest<'a> {
    config: String,
    variants: &'a [AblationVariant],
    images: Vec<String>,
    rows: &'a [Row],
}

struct Outcome {
    psnr: f64,
    residual: f64,
    image: Image64,
}

/// Pairs of variants whose outputs must agree bit for bit.
const IDENTITIES: [(AblationVariant, AblationVariant); 1] = [(AblationVariant::Eta1Delta0, AblationVariant::Baseline)];

fn run_image(config: &RunConfig, variants: &[AblationVariant], path: &Path, index: usize) -> Result<Vec<Outcome>> {
    let x: Image64 = load_image(path).with_context(|| format!("reading {}", path.display()))?;
    let seed = config.seed.wrapping_add(index as u64);
    let op = setup::operator(&config.task, x.shape(), seed)?;
    let y = cm4ir::degrade(&op, &x, config.sigma_y, seed)?;
    variants
        .iter()
        .map(|v| {
            let c = v.configure(config);
            let mut denoiser = setup::denoiser(&c.denoiser)?;
            let restored = restore(&op, &y, &mut denoiser, &setup::sampler(&c, seed)?)
                .with_context(|| format!("{} on {}", v.name(), path.display()))?
                .image;
            let m = MetricReport::evaluate(&op, &y, &restored, Some(&x), PsnrOptions::default())?;
            Ok(Outcome {
                psnr: m.psnr_db.unwrap_or(f64::NAN),
                residual: m.residual_norm,
                image: restored,
            })
        })
        .collect()
}

pub fn run(config: &RunConfig, variants: &[AblationVariant], input: &Path) -> Result<Vec<Row>> {
    let files = setup::image_files(input)?;
    let results: Vec<Vec<Outcome>> = setup::thread_pool(config.workers)?.install(|| {
        files
            .par_iter()
            .enumerate()
            .map(|(i, f)| run_image(config, variants, f, i))
            .collect::<Result<_>>()
    })?;

    for (a, b) in IDENTITIES {
        let (Some(ia), Some(ib)) = (
            variants.iter().position(|v| *v == a),
            variants.iter().position(|v| *v == b),
        ) else {
            continue;
        };
        for (file, outcomes) in files.iter().zip(&results) {
            if outcomes[ia].image.data() != outcomes[ib].image.data() {
                return Err(InvariantFailure(format!(
                    "{} and {} differ on {} under a shared seed",
                    a.name(),
                    b.name(),
                    file.display()
                ))
                .into());
            }
        }
    }

    let n = files.len() as f64;
    let rows = variants
        .iter()
        .enumerate()
        .map(|(k, v)| Row {
            variant: v.name(),
            psnr_mean: results.iter().map(|o| o[k].psnr).sum::<f64>() / n,
            residual_mean: results.iter().map(|o| o[k].residual).sum::<f64>() / n,
            nfe_count: nfe_count(config.steps),
        })
        .collect::<Vec<_>>();

    if let Some(out) = &config.output {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        std::fs::write(out.join("ablation.txt"), table(&rows))?;
        std::fs::write(out.join("ablation.csv"), csv(&rows)?)?;
        let manifest = AblationManifest {
            config: config.serialize(),
            variants,
            images: files.iter().map(|f| f.display().to_string()).collect(),
            rows: &rows,
        };
        write_json(&manifest, &out.join("manifest.json"))?;
    }
    Ok(rows)
}

pub fn table(rows: &[Row]) -> String {
    let mut s = format!(
        "{:<12} {:>10} {:>12} {:>4}\n",
        "variant", "PSNR (dB)", "residual", "NFE"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>10.2} {:>12.4e} {:>4}",
            r.variant, r.psnr_mean, r.residual_mean, r.nfe_count
        );
    }
    s
}

pub fn csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
