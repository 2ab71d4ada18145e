//! Fixed reference artifacts for format conformance: a small analytic flow
//! field, a metadata record and a 27-sample dataset covering every strength
//! class. External readers test against the committed copies of these.

use std::collections::BTreeMap;
use std::path::Path;

use crate::config::{self, OpticalConfig, StrengthSampling};
use crate::error::{Error, Result};
use crate::io::{self, MetadataRecord};
use crate::pipeline::{self, GenerateOptions, GenerationReport, SceneSource, StrengthCategory};
use crate::raster::FlowField;
use crate::synthetic;

pub const LAYOUT_FLOW_FILE: &str = "flow_layout.d2fl";
pub const LAYOUT_META_FILE: &str = "meta_layout.json";
pub const DATASET_DIR: &str = "dataset";
pub const DATASET_SAMPLES: usize = 27;

/// 3 x 2 field whose components are exact binary fractions; pixel (0, 0)
/// holds `(1.5, -0.25)`.
pub fn layout_flow() -> FlowField {
    FlowField::from_fn(3, 2, |x, y| {
        (1.5 - 0.5 * x as f32 + 2.0 * y as f32, -0.25 + 0.125 * (x * y) as f32)
    })
}

/// Metadata record with every field populated by fixed values.
pub fn layout_metadata() -> MetadataRecord {
    let mut files = BTreeMap::new();
    for (name, body) in [("clean.png", "clean"), ("flow_bwd.d2fl", "flow"), ("tilt.png", "tilt"), ("turb.png", "turb")] {
        files.insert(name.to_string(), io::sha256_hex(body.as_bytes()));
    }
    let content_digest = io::combined_digest(&files);
    MetadataRecord {
        format_version: io::META_VERSION,
        sample_id: pipeline::sample_id(12, "scene"),
        source_id: "scene".into(),
        seed: 0x0123_4567_89AB_CDEF,
        d_over_r0: 3.75,
        category: StrengthCategory::Medium,
        path_length: 1000.0,
        baseline_offset: 0.9,
        z_max: 1000.0,
        tilt_rms_px: 0.1 + 0.2,
        kernel_size: 33,
        psf_grid: [8, 8],
        flat_field_mode: false,
        width: 256,
        height: 192,
        engine_version: "turbsynth 0.1.0".into(),
        files,
        content_digest,
    }
}

/// Small, fast configuration for the reference dataset: 32 x 32 scenes and
/// stratified strengths. Tilt displacement is scaled by 32/256 to keep the
/// field as smooth relative to the frame as at 256 x 256. Forward fields are
/// kept so validation runs the fixed-point check.
pub fn dataset_config() -> OpticalConfig {
    let mut cfg = OpticalConfig::default();
    cfg.zernike.modes = 15;
    cfg.zernike.pupil_resolution = 32;
    cfg.zernike.kernel_size = 9;
    cfg.zernike.grid = [2, 2];
    cfg.turbulence.sampling = StrengthSampling::Stratified;
    cfg.dataset.samples = DATASET_SAMPLES;
    cfg.dataset.global_seed = 2024;
    cfg.dataset.debug_outputs = true;
    cfg.tilt.px_per_tilt_unit = Some(config::default_px_per_tilt_unit(cfg.zernike.psf_oversample) * 32.0 / 256.0);
    cfg
}

pub fn dataset_scenes() -> Result<Vec<SceneSource>> {
    (0..3).map(|i| synthetic::scene(32, 32, i).map(SceneSource::Memory)).collect()
}

/// Writes the layout files and the reference dataset under `dir`.
pub fn write_all(dir: &Path) -> Result<GenerationReport> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_flow(dir.join(LAYOUT_FLOW_FILE), &layout_flow())?;
    let meta = dir.join(LAYOUT_META_FILE);
    std::fs::write(&meta, layout_metadata().to_json()?).map_err(|e| Error::io(&meta, e))?;
    let out = dir.join(DATASET_DIR);
    if out.exists() {
        std::fs::remove_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    }
    pipeline::generate_dataset(&dataset_config(), &dataset_scenes()?, &out, &GenerateOptions { workers: 1 })
}
