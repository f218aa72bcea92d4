//! Builds library objects from a [`RunConfig`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cm4ir::io::load_image;
use cm4ir::sampler::{GuidanceMode, SamplerConfig, Variant};
use cm4ir::{
    build_schedule, Denoiser, GaussianPrior, IdentityDenoiser, Image64, InpaintMask, Operator64, RemoteDenoiser,
    SamplerConfig64, Shape,
};

use crate::config::{DenoiserChoice, Guidance, PriorMean, RunConfig, Task, VariantName};

pub const BLUR_SIZE: usize = 9;
pub const BLUR_STD: f64 = 3.0;

/// Operator for `task` on images of `shape`. Random masks are drawn from `seed`.
pub fn operator(task: &Task, shape: Shape, seed: u64) -> Result<Operator64> {
    let op = match task {
        Task::Sr4 => Operator64::super_resolution(shape, 4)?,
        Task::Sr2 => Operator64::super_resolution(shape, 2)?,
        Task::Gblur => Operator64::gaussian_blur(shape, BLUR_SIZE, BLUR_STD)?,
        Task::Identity => Operator64::identity(shape)?,
        Task::InpaintRandom(missing) => {
            let mask = InpaintMask::random(shape.height, shape.width, 1.0 - missing, seed)?;
            Operator64::inpaint(shape, mask)?
        }
        Task::InpaintMask(path) => Operator64::inpaint(shape, load_mask(path)?)?,
    };
    Ok(op)
}

pub fn load_mask(path: &Path) -> Result<InpaintMask> {
    let image: Image64 = load_image(path).with_context(|| format!("reading mask {}", path.display()))?;
    Ok(InpaintMask::from_image(&image)?)
}

/// Gaussian prior with a constant mean, sized to whatever image it is given.
#[derive(Clone, Copy, Debug)]
pub struct UniformPrior {
    pub mean: f64,
    pub std: f64,
}

impl Denoiser<f64> for UniformPrior {
    fn denoise_above_epsilon(&mut self, x: &Image64, sigma: f64) -> cm4ir::Result<Image64> {
        GaussianPrior::uniform(x.shape(), self.mean, self.std)?.denoise_above_epsilon(x, sigma)
    }
}

pub fn denoiser(choice: &DenoiserChoice) -> Result<Box<dyn Denoiser<f64> + Send>> {
    Ok(match choice {
        DenoiserChoice::Gaussian {
            mean: PriorMean::Constant(mean),
            std,
        } => Box::new(UniformPrior { mean: *mean, std: *std }),
        DenoiserChoice::Gaussian {
            mean: PriorMean::Image(path),
            std,
        } => {
            let mean: Image64 = load_image(path).with_context(|| format!("reading prior mean {}", path.display()))?;
            Box::new(GaussianPrior::new(mean, *std)?)
        }
        DenoiserChoice::Identity => Box::new(IdentityDenoiser),
        DenoiserChoice::Remote(endpoint) => {
            Box::new(RemoteDenoiser::connect(endpoint).with_context(|| format!("connecting to {endpoint}"))?)
        }
    })
}

pub fn sampler(config: &RunConfig, seed: u64) -> Result<SamplerConfig64> {
    let mut s = SamplerConfig::new(build_schedule(&config.schedule_params())?);
    s.variant = match config.variant {
        VariantName::Cm4ir => Variant::Cm4ir,
        VariantName::Baseline => Variant::CmBaseline,
        VariantName::DdimSign => Variant::DdimSign,
        VariantName::Polyak => Variant::Polyak {
            beta: config.polyak_beta,
        },
    };
    s.guidance = match config.guidance {
        Guidance::Bp => GuidanceMode::BackProjection,
        Guidance::Ls => GuidanceMode::LeastSquares,
        Guidance::None => GuidanceMode::None,
    };
    s.seed = seed;
    s.sigma_y = config.sigma_y;
    s.final_bp_correction = config.final_bp_correction;
    Ok(s)
}

/// PNG and raw tensor files directly inside `dir`, sorted by name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "cmt")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no .png or .cmt images in {}", dir.display());
    }
    Ok(files)
}

pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}
