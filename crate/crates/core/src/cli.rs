//! Command-line front end. [`run`] parses arguments and returns the process
//! exit code: 0 success, 1 fatal error, 2 partial success, 64 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::warn;

use crate::config::OpticalConfig;
use crate::degrade::{CleanScene, Engine, SampleParams};
use crate::depth::ModulationMap;
use crate::error::{Error, Result};
use crate::flow::forward_splat_invert;
use crate::io;
use crate::pipeline::{self, GenerateOptions, PersistOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable holding the log filter (`error`, `warn`, `info`,
/// `debug`, `trace`). Logging never affects outputs.
pub const LOG_ENV: &str = "D2TURB_LOG";

#[derive(Debug, Parser)]
#[command(name = "turbsynth", version, about = "Depth-aware turbulence degradation and dataset generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset from paired clean images and depth maps.
    Generate {
        /// TOML configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of clean RGB PNG images.
        #[arg(long)]
        clean_dir: PathBuf,
        /// Directory of grayscale depth PNGs named `<stem><suffix>.png`
        /// (defaults to the clean directory).
        #[arg(long)]
        depth_dir: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Global seed; overrides `dataset.global_seed` (default 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads. Output does not depend on this.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Total samples, visiting scenes round-robin; overrides
        /// `dataset.samples`.
        #[arg(long)]
        count: Option<usize>,
        /// Abort instead of skipping scenes without depth or that fail to load.
        #[arg(long)]
        strict: bool,
    },
    /// Degrade a single image and write the full tuple.
    Degrade {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write the uniform-strength (M = 1) baseline to `<out>/flat_field`.
        #[arg(long)]
        flat_field: bool,
        /// Seed of the random draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed D/r0; otherwise drawn from the configured range.
        #[arg(long)]
        d_over_r0: Option<f64>,
    },
    /// Invert a forward displacement field (D2FL) into backward flow.
    InvertFlow {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the header and statistics of a D2FL file, a meta.json, a PNG, or
    /// a sample directory.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Verify a dataset: manifest completeness, categories, digests and flow
    /// fixed points.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
        /// Check the flow of every N-th sample (0 disables).
        #[arg(long, default_value_t = 1)]
        flow_stride: usize,
    },
    /// Run the reduced statistical self-test suite.
    Selftest,
}

fn load_config(path: Option<&Path>) -> Result<OpticalConfig> {
    match path {
        Some(p) => io::parse_config(p),
        None => Ok(OpticalConfig::default()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    config: Option<&Path>,
    clean_dir: &Path,
    depth_dir: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    workers: usize,
    count: Option<usize>,
    strict: bool,
) -> Result<i32> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.dataset.global_seed = s;
    }
    if let Some(c) = count {
        cfg.dataset.samples = c;
    }
    cfg.validate()?;
    let depth_dir = depth_dir.unwrap_or(clean_dir);
    let (scenes, missing) = pipeline::discover_scenes(clean_dir, depth_dir, &cfg.dataset.depth_suffix)?;
    for m in &missing {
        warn!("no depth map for {}", m);
    }
    if strict && !missing.is_empty() {
        return Err(Error::InvalidInput(format!("missing depth for: {}", missing.join(", "))));
    }
    let report = pipeline::generate_dataset(&cfg, &scenes, out, &GenerateOptions { workers })?;
    if strict && !report.skipped.is_empty() {
        return Err(Error::InvalidInput(format!("unreadable scenes: {}", report.skipped.join("; "))));
    }
    let c = &report.manifest.category_counts;
    println!(
        "generated {} samples: weak={} medium={} strong={}",
        report.manifest.sample_count,
        c.get("weak").unwrap_or(&0),
        c.get("medium").unwrap_or(&0),
        c.get("strong").unwrap_or(&0)
    );
    let skipped = missing.len() + report.skipped.len();
    if skipped > 0 {
        println!("skipped {} scenes", skipped);
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn cmd_degrade(
    image: &Path,
    depth: &Path,
    config: Option<&Path>,
    out: &Path,
    flat_field: bool,
    seed: u64,
    d_over_r0: Option<f64>,
) -> Result<i32> {
    let cfg = load_config(config)?;
    let engine = Engine::new(&cfg)?;
    let stem = image
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "image".into());
    let scene = CleanScene::new(io::read_rgb(image)?, io::read_depth(depth)?, stem.clone())?;
    let mut params = pipeline::sample_params(engine.config(), 0);
    params.seed = seed;
    if let Some(d) = d_over_r0 {
        params.d_over_r0 = d;
    }
    let persist = PersistOptions {
        blur: engine.config().dataset.persist_blur,
        debug: true,
    };
    let write = |dir: &Path, m: ModulationMap, params: SampleParams| -> Result<()> {
        let sample = engine.degrade_with_modulation(&scene, m, params)?;
        let mut meta = pipeline::metadata_for(engine.config(), &sample, &stem)?;
        meta.flat_field_mode = meta.flat_field_mode || dir != out;
        pipeline::write_sample(dir, &scene.image, &sample, meta, persist)?;
        Ok(())
    };
    write(out, engine.modulation(&scene)?, params)?;
    if flat_field {
        let (w, h) = scene.dims();
        write(&out.join("flat_field"), ModulationMap::flat(w, h), params)?;
    }
    println!("D/r0 = {:.4} ({})", params.d_over_r0, pipeline::categorize_strength(params.d_over_r0)?);
    Ok(EXIT_OK)
}

fn cmd_invert_flow(input: &Path, out: &Path) -> Result<i32> {
    let delta = io::read_flow(input)?;
    let bwd = forward_splat_invert(&delta)?;
    io::write_flow(out, &bwd.field)?;
    let (w, h) = delta.dims();
    println!("inverted {}x{} field; {} of {} pixels covered", w, h, bwd.valid_count(), w * h);
    Ok(EXIT_OK)
}

fn describe_flow(path: &Path) -> Result<()> {
    let f = io::read_flow(path)?;
    let (w, h) = f.dims();
    let (rx, ry) = f.rms();
    let (mx, my) = f.mean();
    println!("{}: D2FL v{} {}x{} channels=2", path.display(), io::FLOW_VERSION, w, h);
    println!("  mean = ({:.6}, {:.6}) px, rms = ({:.6}, {:.6}) px", mx, my, rx, ry);
    Ok(())
}

fn cmd_inspect(input: &Path) -> Result<i32> {
    if input.is_dir() {
        let meta_path = input.join("meta.json");
        if meta_path.is_file() {
            print!("{}", io::read_metadata(&meta_path)?.to_json()?);
        }
        let manifest = input.join("manifest.json");
        if manifest.is_file() {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            print!("{}", text);
        }
        for name in ["flow_bwd.d2fl", "flow_fwd.d2fl"] {
            if input.join(name).is_file() {
                describe_flow(&input.join(name))?;
            }
        }
        return Ok(EXIT_OK);
    }
    match input.extension().and_then(|e| e.to_str()) {
        Some("d2fl") => describe_flow(input)?,
        Some("json") => {
            let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
            print!("{}", text);
        }
        Some("png") => {
            let img = io::read_image(input)?;
            println!(
                "{}: {}x{} channels={} mean={:.6}",
                input.display(),
                img.width(),
                img.height(),
                img.channels(),
                img.mean()
            );
        }
        _ => {
            // fall back on the magic bytes
            describe_flow(input)?
        }
    }
    Ok(EXIT_OK)
}

fn cmd_validate(dataset: &Path, flow_stride: usize) -> Result<i32> {
    let report = pipeline::validate_dataset(dataset, flow_stride)?;
    for p in &report.problems {
        eprintln!("{}", p);
    }
    println!(
        "checked {} samples ({} flows): {}",
        report.samples_checked,
        report.flows_checked,
        if report.ok() { "ok" } else { "FAILED" }
    );
    Ok(if report.ok() { EXIT_OK } else { EXIT_FATAL })
}

fn cmd_selftest() -> Result<i32> {
    let checks = crate::diagnostics::self_test()?;
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { EXIT_OK } else { EXIT_FATAL })
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Generate {
            config,
            clean_dir,
            depth_dir,
            out,
            seed,
            workers,
            count,
            strict,
        } => cmd_generate(
            config.as_deref(),
            &clean_dir,
            depth_dir.as_deref(),
            &out,
            seed,
            workers,
            count,
            strict,
        ),
        Command::Degrade {
            image,
            depth,
            config,
            out,
            flat_field,
            seed,
            d_over_r0,
        } => cmd_degrade(&image, &depth, config.as_deref(), &out, flat_field, seed, d_over_r0),
        Command::InvertFlow { input, out } => cmd_invert_flow(&input, &out),
        Command::Inspect { input } => cmd_inspect(&input),
        Command::Validate { dataset, flow_stride } => cmd_validate(&dataset, flow_stride),
        Command::Selftest => cmd_selftest(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            EXIT_FATAL
        }
    }
}
