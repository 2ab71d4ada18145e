//! Invert a forward displacement by splatting, then check the fixed point
//! and the photometric round trip on a smooth image.
//!
//! `cargo run --release --example invert_flow -- [rms_px]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use turbsynth::degrade::backward_warp;
use turbsynth::flow::{fixed_point_residuals, forward_splat_invert, median};
use turbsynth::metrics::psnr;
use turbsynth::synthetic::smooth_texture;
use turbsynth::tilt::{synthesize_raw_field, TiltSpectrumParams};

fn main() -> turbsynth::Result<()> {
    let rms: f64 = std::env::args().nth(1).and_then(|v| v.parse().ok()).unwrap_or(2.0);
    let n = 256;
    let delta = synthesize_raw_field(n, n, &TiltSpectrumParams::new(512.0, rms), &mut ChaCha8Rng::seed_from_u64(4))?;
    let bwd = forward_splat_invert(&delta)?;
    println!("covered pixels: {} of {}", bwd.valid_count(), n * n);

    let mut r = fixed_point_residuals(&delta, &bwd, true);
    let max = r.iter().cloned().fold(0.0, f64::max);
    println!("fixed-point residual: median {:.4} px, max {:.4} px", median(&mut r), max);

    let clean = smooth_texture(n, n, 6.0, 4);
    let warped = backward_warp(&clean, &delta)?;
    let restored = backward_warp(&warped, &bwd.field)?;
    println!("warped vs clean:   {:.2} dB", psnr(&warped, &clean)?);
    println!("restored vs clean: {:.2} dB", psnr(&restored, &clean)?);
    Ok(())
}
