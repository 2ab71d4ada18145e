//! Degrade one procedural scene and report image quality against the clean
//! input.
//!
//! `cargo run --release --example degrade_scene -- [out_dir] [d_over_r0]`

use std::path::PathBuf;
use std::time::Instant;

use turbsynth::metrics::{psnr, ssim};
use turbsynth::pipeline::{self, PersistOptions};
use turbsynth::{synthetic, Engine, OpticalConfig, SampleParams};

fn main() -> turbsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "degrade_out".into()));
    let d_over_r0: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3.0);

    let config = OpticalConfig::default();
    let t = Instant::now();
    let engine = Engine::new(&config)?;
    println!("optics ready in {:.2?}", t.elapsed());

    let scene = synthetic::scene(256, 256, 1)?;
    let t = Instant::now();
    let sample = engine.degrade(&scene, SampleParams { d_over_r0, seed: 42 })?;
    println!("degraded in {:.2?}", t.elapsed());

    println!(
        "D/r0 = {} ({}), tilt rms = {:.3} px, covered = {:.1}%",
        d_over_r0,
        pipeline::categorize_strength(d_over_r0)?,
        sample.info.tilt_rms_px,
        100.0 * sample.info.valid_fraction
    );
    println!(
        "turb vs clean: PSNR {:.2} dB, SSIM {:.4}",
        psnr(&sample.turb, &scene.image)?,
        ssim(&sample.turb, &scene.image)?
    );
    println!(
        "tilt vs clean: PSNR {:.2} dB, SSIM {:.4}",
        psnr(&sample.tilt, &scene.image)?,
        ssim(&sample.tilt, &scene.image)?
    );

    let meta = pipeline::metadata_for(engine.config(), &sample, &scene.identifier)?;
    let persist = PersistOptions { blur: true, debug: true };
    pipeline::write_sample(&out, &scene.image, &sample, meta, persist)?;
    println!("wrote {}", out.display());
    Ok(())
}
