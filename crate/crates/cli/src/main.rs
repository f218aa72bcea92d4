//! `cm4ir` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 invariant failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod ablate;
mod config;
mod measurement;
mod restore;
mod setup;

use std::fmt;
use std::io::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use cm4ir::sampler::Fault;
use cm4ir::schedule::presets;
use cm4ir::verify::{self, VerifyOptions};
use cm4ir::{build_schedule, Schedule64};
use rayon::prelude::*;

use ablate::AblationVariant;
use config::RunConfig;

/// A check the tool exists to enforce did not hold.
#[derive(Debug)]
pub struct InvariantFailure(pub String);

impl fmt::Display for InvariantFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvariantFailure {}

#[derive(Parser, Debug)]
#[command(
    name = "cm4ir",
    version,
    about = "Few-step guided consistency-model image restoration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply the degradation to an image or a directory of images.
    Degrade(ConfigArgs),
    /// Restore a measurement directory, or a directory of them.
    Restore(ConfigArgs),
    /// Compare sampler variants over a directory of images.
    Ablate {
        /// Comma-separated variants to run.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        variants: Vec<AblationVariant>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the operator, denoiser and marginal-preservation checks.
    Verify(VerifyArgs),
    /// Print the noise schedule of a configuration or of every preset.
    ScheduleDump {
        /// Dump every preset hyperparameter row instead of the configuration.
        #[arg(long)]
        all_presets: bool,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Answer remote denoiser requests over TCP with the configured denoiser.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Stop after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Configuration file plus per-key overrides. Flags win over the file.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sr4, sr2, gblur, identity, inpaint-random(MISSING) or inpaint-mask(FILE)
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    sigma_y: Option<String>,
    #[arg(long)]
    i_n: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, visible_alias = "n")]
    steps: Option<String>,
    /// One value, or one per step in execution order.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// One value, or one per step in execution order.
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    zeta: Option<String>,
    /// cm4ir, baseline, ddim-sign or polyak
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    polyak_beta: Option<String>,
    /// bp, ls or none
    #[arg(long)]
    guidance: Option<String>,
    #[arg(long)]
    final_bp_correction: Option<String>,
    /// gaussian(MEAN,STD) with MEAN a number or image file, identity, or remote(HOST:PORT)
    #[arg(long)]
    denoiser: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    ground_truth: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> [(&'static str, &Option<String>); 19] {
        [
            ("task", &self.task),
            ("sigma_y", &self.sigma_y),
            ("i_n", &self.i_n),
            ("gamma", &self.gamma),
            ("steps", &self.steps),
            ("delta", &self.delta),
            ("eta", &self.eta),
            ("mu", &self.mu),
            ("zeta", &self.zeta),
            ("variant", &self.variant),
            ("polyak_beta", &self.polyak_beta),
            ("guidance", &self.guidance),
            ("final_bp_correction", &self.final_bp_correction),
            ("denoiser", &self.denoiser),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("input", &self.input),
            ("output", &self.output),
            ("ground_truth", &self.ground_truth),
        ]
    }

    /// Layers the file, then the flags, over `base`.
    fn resolve_onto(&self, mut base: RunConfig) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            base.apply(&text).with_context(|| format!("in {}", path.display()))?;
        }
        for (key, value) in self.flags() {
            if let Some(v) = value {
                base.set(key, v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        base.validate()?;
        Ok(base)
    }

    fn resolve(&self) -> Result<RunConfig> {
        self.resolve_onto(RunConfig::default())
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Monte Carlo draws per check.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Side of the square operator test images, a multiple of 4.
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Random instances per operator.
    #[arg(long, default_value_t = 5)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shift the noise-estimate direction in the marginal simulation.
    #[arg(long)]
    fault: bool,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InvariantFailure>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| anyhow!("missing {key} (set --{key} or `{key} =` in the config)"))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Degrade(args) => degrade(&args.resolve()?),
        Command::Restore(args) => {
            let front = args.resolve()?;
            let input = required(&front.input, "input")?;
            let reports = restore::run(input, front.workers, |base| args.resolve_onto(base))?;
            for r in reports {
                match r.psnr_db {
                    Some(p) => println!(
                        "{}: psnr {p:.2} dB, residual {:.4e}",
                        r.measurement.display(),
                        r.residual_norm
                    ),
                    None => println!("{}: residual {:.4e}", r.measurement.display(), r.residual_norm),
                }
            }
            Ok(())
        }
        Command::Ablate { variants, config } => {
            let config = config.resolve()?;
            let input = required(&config.input, "input")?;
            let rows = ablate::run(&config, &variants, input)?;
            print!("{}", ablate::table(&rows));
            if config.output.is_none() {
                print!("\n{}", ablate::csv(&rows)?);
            }
            Ok(())
        }
        Command::Verify(args) => verify_cmd(&args),
        Command::ScheduleDump {
            all_presets,
            csv,
            config,
        } => schedule_dump(&config.resolve()?, all_presets, csv.as_deref()),
        Command::Serve {
            listen,
            max_connections,
            config,
        } => serve(&config.resolve()?, &listen, max_connections),
    }
}

fn degrade(config: &RunConfig) -> Result<()> {
    let input = required(&config.input, "input")?;
    let output = required(&config.output, "output")?;
    let jobs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
        setup::image_files(input)?
            .into_iter()
            .map(|f| {
                let dir = output.join(setup::stem(&f));
                (f, dir)
            })
            .collect()
    } else {
        vec![(input.to_path_buf(), output.to_path_buf())]
    };
    let written = setup::thread_pool(config.workers)?.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(i, (src, dir))| measurement::write(config, src, i, dir))
            .collect::<Result<Vec<_>>>()
    })?;
    for m in written {
        println!(
            "{} -> {}: {} measured as {} (seed {})",
            m.manifest.source.display(),
            m.dir.display(),
            m.record.input_shape,
            m.record.output_shape,
            m.record.seed
        );
    }
    Ok(())
}

fn verify_cmd(args: &VerifyArgs) -> Result<()> {
    let options = VerifyOptions {
        size: args.size,
        instances: args.instances,
        samples: args.samples,
        seed: args.seed,
        fault: args.fault.then_some(Fault::ShiftedEstimate),
        ..Default::default()
    };
    let report = verify::run(&options)?;
    for c in &report.checks {
        println!(
            "{} {:<36} worst {:.3e} tolerance {:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.tolerance
        );
    }
    if let Some(path) = &args.json {
        measurement::write_json(&report, path)?;
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", report.checks.len());
    if failed > 0 {
        return Err(InvariantFailure(format!("{failed} verification checks failed")).into());
    }
    Ok(())
}

fn schedule_dump(config: &RunConfig, all_presets: bool, csv_path: Option<&Path>) -> Result<()> {
    let mut entries: Vec<(String, Schedule64)> = Vec::new();
    if all_presets {
        for row in presets::ROWS {
            let label = format!("{}/{}/sigma_y={}", row.task, row.dataset, row.sigma_y);
            entries.push((label, build_schedule(&row.params())?));
        }
    } else {
        entries.push(("config".into(), build_schedule(&config.schedule_params())?));
    }

    let mut out = std::io::stdout().lock();
    let mut writer = csv_path.map(csv::Writer::from_path).transpose()?;
    if let Some(w) = writer.as_mut() {
        w.write_record(["schedule", "step", "alpha_bar", "tau", "delta", "mu"])?;
    }
    for (label, s) in &entries {
        writeln!(out, "{label}")?;
        writeln!(
            out,
            "  {:>4} {:>12} {:>12} {:>6} {:>6}",
            "step", "alpha_bar", "tau", "delta", "mu"
        )?;
        for k in 0..s.len() {
            let step = s.len() - k;
            let fields = [s.alpha_bar()[k], s.tau()[k], s.delta()[k], s.mu()[k]];
            writeln!(
                out,
                "  {step:>4} {:>12.8} {:>12.8} {:>6} {:>6}",
                fields[0], fields[1], fields[2], fields[3]
            )?;
            if let Some(w) = writer.as_mut() {
                let mut record = vec![label.clone(), step.to_string()];
                record.extend(fields.iter().map(|v| v.to_string()));
                w.write_record(&record)?;
            }
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    Ok(())
}

fn serve(config: &RunConfig, listen: &str, max_connections: Option<usize>) -> Result<()> {
    if matches!(config.denoiser, config::DenoiserChoice::Remote(_)) {
        return Err(anyhow!("serve needs a local denoiser"));
    }
    let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let mut denoiser = setup::denoiser(&config.denoiser)?;
    for (n, stream) in listener.incoming().enumerate() {
        let served = cm4ir::denoise::serve_connection(stream?, &mut denoiser)?;
        eprintln!("connection {}: {served} requests", n + 1);
        if max_connections.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    Ok(())
}
