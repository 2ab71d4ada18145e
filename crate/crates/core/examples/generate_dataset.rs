//! Generate a small dataset from procedural scenes, validate it and print
//! its directory digest.
//!
//! `cargo run --release --example generate_dataset -- [out_dir] [workers]`

use std::path::PathBuf;

use turbsynth::config::StrengthSampling;
use turbsynth::pipeline::{dataset_digest, generate_dataset, validate_dataset, GenerateOptions, SceneSource};
use turbsynth::{synthetic, OpticalConfig};

fn main() -> turbsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "dataset_out".into()));
    let workers: usize = args.next().and_then(|v| v.parse().ok()).unwrap_or(4);

    let mut config = OpticalConfig::default();
    config.dataset.samples = 6;
    config.dataset.global_seed = 7;
    config.turbulence.sampling = StrengthSampling::Stratified;
    let scenes = (0..3)
        .map(|i| synthetic::scene(128, 128, i).map(SceneSource::Memory))
        .collect::<turbsynth::Result<Vec<_>>>()?;

    let report = generate_dataset(&config, &scenes, &out, &GenerateOptions { workers })?;
    for s in &report.manifest.samples {
        println!("{}  D/r0 = {:.3}  {}", s.sample_id, s.d_over_r0, s.category);
    }
    let check = validate_dataset(&out, 1)?;
    println!(
        "validate: {} samples, {} flows, {}",
        check.samples_checked,
        check.flows_checked,
        if check.ok() { "ok" } else { "FAILED" }
    );
    println!("dataset digest {}", dataset_digest(&out)?);
    Ok(())
}
