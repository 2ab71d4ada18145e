//! Strength taxonomy, per-sample parameter draws, batch dataset generation
//! and dataset verification.
//!
//! Layout of a generated dataset:
//!
//! ```text
//! <root>/manifest.json
//! <root>/<sample_id>/{clean.png, tilt.png, turb.png, flow_bwd.d2fl, meta.json}
//! <root>/<sample_id>/{blur.png, flow_fwd.d2fl, modulation.png}   (optional)
//! ```
//!
//! `manifest.json` is written last; a directory without it is incomplete.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{OpticalConfig, StrengthSampling};
use crate::degrade::{backward_warp, CleanScene, DegradedSample, Engine, SampleParams};
use crate::error::{Error, Result};
use crate::flow::{fixed_point_residuals, median, splat_invert_unfilled, BackwardFlow, COVERAGE_EPSILON};
use crate::io::{self, MetadataRecord};
use crate::metrics::psnr;
use crate::raster::{FlowField, Image};

pub const WEAK_UPPER: f64 = 2.25;
pub const STRONG_LOWER: f64 = 3.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrengthCategory {
    Weak,
    Medium,
    Strong,
}

impl StrengthCategory {
    pub const ALL: [StrengthCategory; 3] = [StrengthCategory::Weak, StrengthCategory::Medium, StrengthCategory::Strong];

    pub fn of(d_over_r0: f64) -> Result<Self> {
        categorize_strength(d_over_r0)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StrengthCategory::Weak => "weak",
            StrengthCategory::Medium => "medium",
            StrengthCategory::Strong => "strong",
        }
    }
}

impl fmt::Display for StrengthCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// weak below 2.25, medium on the closed interval [2.25, 3.75], strong above.
pub fn categorize_strength(d_over_r0: f64) -> Result<StrengthCategory> {
    if !(d_over_r0 >= 0.0) || !d_over_r0.is_finite() {
        return Err(Error::Domain(format!("D/r0 = {} must be finite and >= 0", d_over_r0)));
    }
    Ok(if d_over_r0 < WEAK_UPPER {
        StrengthCategory::Weak
    } else if d_over_r0 <= STRONG_LOWER {
        StrengthCategory::Medium
    } else {
        StrengthCategory::Strong
    })
}

/// SplitMix64 output function.
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample seed. Injective in `sample_index` for a fixed `global_seed`.
pub fn sample_seed(global_seed: u64, sample_index: u64) -> u64 {
    splitmix64(global_seed.wrapping_add(sample_index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Strength and seed of sample `sample_index`. Depends only on the
/// configuration and the index, never on generation order.
pub fn sample_params(config: &OpticalConfig, sample_index: u64) -> SampleParams {
    let seed = sample_seed(config.dataset.global_seed, sample_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the degradation itself consumes stream 0 of the same seed
    rng.set_stream(1);
    let u: f64 = rng.random();
    let [lo, hi] = config.turbulence.d_over_r0;
    let d_over_r0 = match config.turbulence.sampling {
        StrengthSampling::Uniform => lo + (hi - lo) * u,
        StrengthSampling::Stratified => {
            let classes: Vec<StrengthCategory> = StrengthCategory::ALL
                .into_iter()
                .filter(|c| match c {
                    StrengthCategory::Weak => lo < WEAK_UPPER,
                    StrengthCategory::Medium => lo <= STRONG_LOWER && hi >= WEAK_UPPER,
                    StrengthCategory::Strong => hi > STRONG_LOWER,
                })
                .collect();
            match classes[(sample_index % classes.len() as u64) as usize] {
                StrengthCategory::Weak => {
                    let b = hi.min(WEAK_UPPER);
                    lo + (b - lo) * u
                }
                StrengthCategory::Medium => {
                    let a = lo.max(WEAK_UPPER);
                    a + (hi.min(STRONG_LOWER) - a) * u
                }
                StrengthCategory::Strong => {
                    let a = lo.max(STRONG_LOWER);
                    hi - (hi - a) * u
                }
            }
        }
    };
    SampleParams { d_over_r0, seed }
}

/// Where a scene comes from.
#[derive(Clone, Debug)]
pub enum SceneSource {
    Memory(CleanScene),
    Files { id: String, image: PathBuf, depth: PathBuf },
}

impl SceneSource {
    pub fn id(&self) -> &str {
        match self {
            SceneSource::Memory(s) => &s.identifier,
            SceneSource::Files { id, .. } => id,
        }
    }

    pub fn load(&self) -> Result<CleanScene> {
        match self {
            SceneSource::Memory(s) => Ok(s.clone()),
            SceneSource::Files { id, image, depth } => {
                CleanScene::new(io::read_rgb(image)?, io::read_depth(depth)?, id.clone())
            }
        }
    }
}

/// Pairs every `*.png` in `clean_dir` with `<stem><suffix>.png` in
/// `depth_dir`. Returns the pairs sorted by stem and the stems lacking depth.
pub fn discover_scenes(clean_dir: &Path, depth_dir: &Path, suffix: &str) -> Result<(Vec<SceneSource>, Vec<String>)> {
    let entries = std::fs::read_dir(clean_dir).map_err(|e| Error::io(clean_dir, e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(clean_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("png")) != Some(true) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if !stem.ends_with(suffix) || clean_dir != depth_dir {
                stems.push((stem.to_string(), path.clone()));
            }
        }
    }
    stems.sort();
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for (stem, image) in stems {
        let depth = depth_dir.join(format!("{}{}.png", stem, suffix));
        if depth.is_file() {
            found.push(SceneSource::Files { id: stem, image, depth });
        } else {
            missing.push(stem);
        }
    }
    Ok((found, missing))
}

pub fn sample_id(index: u64, source_id: &str) -> String {
    format!("{:06}_{}", index, source_id)
}

/// Run-time options that never affect dataset content.
#[derive(Clone, Debug)]
pub struct GenerateOptions {
    /// Worker threads; `0` means the rayon default.
    pub workers: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { workers: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub source_id: String,
    pub category: StrengthCategory,
    pub d_over_r0: f64,
    pub content_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub flow: u32,
    pub meta: u32,
    pub manifest: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub engine_version: String,
    pub format_versions: FormatVersions,
    /// Resolved configuration, every default made explicit.
    pub config: OpticalConfig,
    pub sample_count: usize,
    pub category_counts: BTreeMap<String, usize>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` when set. Excluded
    /// from [`dataset_digest`].
    pub created_unix: u64,
    /// Modelling choices a consumer should know about.
    pub assumptions: BTreeMap<String, Value>,
    pub samples: Vec<ManifestEntry>,
    /// Scenes that could not be loaded.
    pub skipped_scenes: Vec<String>,
}

fn assumptions(config: &OpticalConfig) -> BTreeMap<String, Value> {
    let mut a = BTreeMap::new();
    let sampling = match config.turbulence.sampling {
        StrengthSampling::Uniform => "uniform over turbulence.d_over_r0",
        StrengthSampling::Stratified => "stratified by category, uniform within each",
    };
    a.insert("d_over_r0_sampling".into(), Value::from(sampling));
    a.insert(
        "flow_inversion".into(),
        Value::from("bilinear weighted-average forward splatting of -Delta"),
    );
    a.insert("coverage_epsilon".into(), Value::from(COVERAGE_EPSILON));
    a.insert(
        "hole_filling".into(),
        Value::from("outward neighbour averaging, then harmonic relaxation"),
    );
    a.insert("blur_boundary".into(), Value::from("half-sample symmetric reflection"));
    a.insert("warp_boundary".into(), Value::from("border clamp"));
    a.insert(
        "engineering_defaults".into(),
        Value::from(vec![
            "zernike.modes",
            "zernike.pupil_resolution",
            "zernike.kernel_size",
            "zernike.grid",
            "zernike.correlation_length",
            "tilt.corr_length_px",
            "tilt.px_per_tilt_unit",
            "geometry.s",
        ]),
    );
    a
}

fn created_unix() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return v;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Builds the metadata record for a degraded sample; digests are left empty.
pub fn metadata_for(config: &OpticalConfig, sample: &DegradedSample, id: &str) -> Result<MetadataRecord> {
    let (w, h) = sample.turb.dims();
    Ok(MetadataRecord {
        format_version: io::META_VERSION,
        sample_id: id.to_string(),
        source_id: sample.info.source_id.clone(),
        seed: sample.info.seed,
        d_over_r0: sample.info.d_over_r0,
        category: categorize_strength(sample.info.d_over_r0)?,
        path_length: config.geometry.path_length,
        baseline_offset: config.geometry.baseline_offset,
        z_max: sample.info.z_max,
        tilt_rms_px: sample.info.tilt_rms_px,
        kernel_size: config.zernike.kernel_size,
        psf_grid: config.zernike.grid,
        flat_field_mode: sample.info.flat_field,
        width: w,
        height: h,
        engine_version: io::ENGINE_VERSION.to_string(),
        files: BTreeMap::new(),
        content_digest: String::new(),
    })
}

/// Which optional artifacts to persist.
#[derive(Clone, Copy, Debug, Default)]
pub struct PersistOptions {
    pub blur: bool,
    pub debug: bool,
}

impl PersistOptions {
    pub fn from_config(config: &OpticalConfig) -> Self {
        PersistOptions {
            blur: config.dataset.persist_blur,
            debug: config.dataset.debug_outputs,
        }
    }
}

/// Writes one sample tuple into `dir` (created if needed); `meta.json` last.
pub fn write_sample(
    dir: &Path,
    clean: &Image,
    sample: &DegradedSample,
    mut meta: MetadataRecord,
    opts: PersistOptions,
) -> Result<MetadataRecord> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("clean.png", io::encode_image(clean)?),
        ("tilt.png", io::encode_image(&sample.tilt)?),
        ("turb.png", io::encode_image(&sample.turb)?),
        ("flow_bwd.d2fl", io::encode_flow(&sample.backward_flow.field)?),
    ];
    if opts.blur {
        files.push(("blur.png", io::encode_image(&sample.blur)?));
    }
    if opts.debug {
        files.push(("flow_fwd.d2fl", io::encode_flow(&sample.forward_flow)?));
        files.push(("modulation.png", io::encode_gray16(sample.modulation.as_map())?));
    }
    meta.files.clear();
    for (name, bytes) in &files {
        io::write_synced(&dir.join(name), bytes)?;
        meta.files.insert(name.to_string(), io::sha256_hex(bytes));
    }
    meta.content_digest = io::combined_digest(&meta.files);
    io::write_synced(&dir.join("meta.json"), meta.to_json()?.as_bytes())?;
    Ok(meta)
}

/// Result of a generation run.
#[derive(Clone, Debug)]
pub struct GenerationReport {
    pub manifest: DatasetManifest,
    pub skipped: Vec<String>,
}

/// Generates `config.dataset.samples` samples, visiting `scenes` round-robin
/// (sample `i` uses scene `i % scenes.len()`), and writes the manifest last.
/// Scenes that fail to load are skipped and reported; write failures abort.
pub fn generate_dataset(
    config: &OpticalConfig,
    scenes: &[SceneSource],
    out: &Path,
    opts: &GenerateOptions,
) -> Result<GenerationReport> {
    if scenes.is_empty() {
        return Err(Error::InvalidInput("no scenes to generate from".into()));
    }
    let engine = Engine::new(config)?;
    let config = engine.config().clone();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join("manifest.json");
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    let total = config.dataset.samples as u64;
    let n = scenes.len() as u64;
    let persist = PersistOptions::from_config(&config);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {}", e)))?;

    type SceneResult = std::result::Result<Vec<ManifestEntry>, String>;
    let results: Vec<Result<SceneResult>> = pool.install(|| {
        scenes
            .par_iter()
            .enumerate()
            .map(|(si, source)| -> Result<SceneResult> {
                let indices: Vec<u64> = (si as u64..total).step_by(n as usize).collect();
                if indices.is_empty() {
                    return Ok(Ok(Vec::new()));
                }
                let scene = match source.load() {
                    Ok(s) => s,
                    Err(e) => {
                        warn!("skipping scene {}: {}", source.id(), e);
                        return Ok(Err(format!("{}: {}", source.id(), e)));
                    }
                };
                let mut entries = Vec::with_capacity(indices.len());
                for i in indices {
                    let params = sample_params(&config, i);
                    let sample = engine.degrade(&scene, params)?;
                    let id = sample_id(i, &scene.identifier);
                    let meta = metadata_for(&config, &sample, &id)?;
                    let meta = write_sample(&out.join(&id), &scene.image, &sample, meta, persist)?;
                    info!("{} D/r0 = {:.3} ({})", id, meta.d_over_r0, meta.category);
                    entries.push(ManifestEntry {
                        sample_id: id,
                        source_id: meta.source_id,
                        category: meta.category,
                        d_over_r0: meta.d_over_r0,
                        content_digest: meta.content_digest,
                    });
                }
                Ok(Ok(entries))
            })
            .collect()
    });

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(entries) => samples.extend(entries),
            Err(msg) => skipped.push(msg),
        }
    }
    samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut category_counts: BTreeMap<String, usize> =
        StrengthCategory::ALL.iter().map(|c| (c.to_string(), 0)).collect();
    for s in &samples {
        *category_counts.entry(s.category.to_string()).or_default() += 1;
    }
    let manifest = DatasetManifest {
        engine_version: io::ENGINE_VERSION.to_string(),
        format_versions: FormatVersions {
            flow: io::FLOW_VERSION,
            meta: io::META_VERSION,
            manifest: io::MANIFEST_VERSION,
        },
        assumptions: assumptions(&config),
        config,
        sample_count: samples.len(),
        category_counts,
        created_unix: created_unix(),
        samples,
        skipped_scenes: skipped.clone(),
    };
    io::write_synced(&manifest_path, io::canonical_json(&manifest)?.as_bytes())?;
    Ok(GenerationReport { manifest, skipped })
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// SHA-256 over every file of a dataset tree, keyed by relative path. The
/// manifest's `created_unix` field is ignored.
pub fn dataset_digest(root: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    let mut lines = BTreeMap::new();
    for rel in files {
        let path = root.join(&rel);
        let mut bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if rel == Path::new("manifest.json") {
            let mut v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::Metadata(e.to_string()))?;
            if let Some(m) = v.as_object_mut() {
                m.remove("created_unix");
            }
            bytes = io::canonical_json(&v)?.into_bytes();
        }
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        lines.insert(key, io::sha256_hex(&bytes));
    }
    Ok(io::combined_digest(lines.iter()))
}

/// Median fixed-point residual above which `validate` flags a sample.
pub const RESIDUAL_LIMIT_PX: f64 = 0.05;
/// Minimum interior PSNR of `warp(tilt, V_bwd)` against `clean` when the forward field
/// was not persisted.
pub const ROUND_TRIP_PSNR_LIMIT_DB: f64 = 25.0;

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub samples_checked: usize,
    pub flows_checked: usize,
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// PSNR over pixels at least `ceil(max |V|) + 1` from every edge, where the
/// clamped border samples cannot enter the round trip. An empty interior
/// scores `+inf`.
fn interior_psnr(a: &Image, b: &Image, flow: &FlowField) -> Result<f64> {
    let reach = flow.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let margin = reach.ceil() as usize + 1;
    let (w, h) = a.dims();
    if 2 * margin >= w || 2 * margin >= h {
        return Ok(f64::INFINITY);
    }
    let crop = |img: &Image| {
        Image::from_fn(w - 2 * margin, h - 2 * margin, img.channels(), |x, y, c| img.get(x + margin, y + margin, c))
    };
    psnr(&crop(a), &crop(b))
}

/// Flow check for one sample directory; `None` means it passed.
fn check_flow(dir: &Path, meta: &MetadataRecord) -> Result<Option<String>> {
    let bwd_field = io::read_flow(dir.join("flow_bwd.d2fl"))?;
    let fwd_path = dir.join("flow_fwd.d2fl");
    if fwd_path.is_file() {
        let fwd = io::read_flow(&fwd_path)?;
        let valid = splat_invert_unfilled(&fwd)?.valid;
        let bwd = BackwardFlow { field: bwd_field, valid };
        let mut r = fixed_point_residuals(&fwd, &bwd, true);
        if r.is_empty() {
            return Ok(None);
        }
        let med = median(&mut r);
        return Ok((med >= RESIDUAL_LIMIT_PX).then(|| {
            format!("{}: median fixed-point residual {:.4} px >= {}", meta.sample_id, med, RESIDUAL_LIMIT_PX)
        }));
    }
    let tilt = io::read_image(dir.join("tilt.png"))?;
    let clean = io::read_image(dir.join("clean.png"))?;
    let back = backward_warp(&tilt, &bwd_field)?;
    let p = interior_psnr(&back, &clean, &bwd_field)?;
    Ok((p < ROUND_TRIP_PSNR_LIMIT_DB).then(|| {
        format!("{}: round-trip PSNR {:.2} dB < {}", meta.sample_id, p, ROUND_TRIP_PSNR_LIMIT_DB)
    }))
}

/// Verifies manifest completeness, per-sample categories and digests, and the
/// flow fixed point on every `flow_stride`-th sample.
pub fn validate_dataset(root: &Path, flow_stride: usize) -> Result<ValidationReport> {
    let manifest_path = root.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(Error::Metadata(format!("{} is missing; dataset incomplete", manifest_path.display())));
    }
    let bytes = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Value = serde_json::from_slice(&bytes).map_err(|e| Error::Metadata(format!("manifest.json: {}", e)))?;
    let entries: Vec<ManifestEntry> = serde_json::from_value(manifest.get("samples").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Metadata(format!("manifest.json samples: {}", e)))?;

    let mut report = ValidationReport::default();
    let mut listed = std::collections::BTreeSet::new();
    for (k, entry) in entries.iter().enumerate() {
        listed.insert(entry.sample_id.clone());
        let dir = root.join(&entry.sample_id);
        let meta = match io::read_metadata(dir.join("meta.json")) {
            Ok(m) => m,
            Err(e) => {
                report.problems.push(format!("{}: {}", entry.sample_id, e));
                continue;
            }
        };
        report.samples_checked += 1;
        if let Err(e) = meta.check_consistency() {
            report.problems.push(e.to_string());
        }
        if meta.content_digest != entry.content_digest {
            report.problems.push(format!("{}: manifest digest differs from meta.json", entry.sample_id));
        }
        let mut intact = true;
        for (name, digest) in &meta.files {
            let path = dir.join(name);
            match std::fs::read(&path) {
                Ok(b) if io::sha256_hex(&b) == *digest => {}
                Ok(_) => {
                    intact = false;
                    report.problems.push(format!("digest mismatch: {}", path.display()));
                }
                Err(e) => {
                    intact = false;
                    report.problems.push(format!("{}: {}", path.display(), e));
                }
            }
        }
        if intact && flow_stride > 0 && k % flow_stride == 0 {
            report.flows_checked += 1;
            match check_flow(&dir, &meta) {
                Ok(None) => {}
                Ok(Some(p)) => report.problems.push(p),
                Err(e) => report.problems.push(format!("{}: {}", entry.sample_id, e)),
            }
        }
    }
    let dirs = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for d in dirs {
        let path = d.map_err(|e| Error::io(root, e))?.path();
        if path.is_dir() {
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            if !listed.contains(&name) {
                report.problems.push(format!("{}: sample directory not listed in manifest", name));
            }
        }
    }
    Ok(report)
}
