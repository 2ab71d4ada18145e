//! Synthesize a raw tilt displacement field, measure its radial spectrum
//! slope and store it as D2FL.
//!
//! `cargo run --release --example tilt_field -- [out.d2fl] [rms_px]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use turbsynth::diagnostics::{log_log_fit, radial_power_spectrum};
use turbsynth::io;
use turbsynth::tilt::{synthesize_raw_field, TiltSpectrumParams};

fn main() -> turbsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "tilt.d2fl".into());
    let rms: f64 = args.next().and_then(|v| v.parse().ok()).unwrap_or(2.0);

    let n = 256;
    let params = TiltSpectrumParams::new(512.0, rms);
    let field = synthesize_raw_field(n, n, &params, &mut ChaCha8Rng::seed_from_u64(1))?;
    let (rx, ry) = field.rms();
    println!("{}x{} field, rms = ({:.4}, {:.4}) px", n, n, rx, ry);

    let ps = radial_power_spectrum(&field.channel(0), n, n)?;
    let ks: Vec<f64> = (3..=30).map(|k| k as f64).collect();
    let pk: Vec<f64> = (3..=30).map(|k| ps[k]).collect();
    let (slope, _) = log_log_fit(&ks, &pk)?;
    println!("spectral slope over 3..30 cycles/image: {:.3} (exponent {:.3})", slope, params.spectral_exponent);

    io::write_flow(&out, &field)?;
    println!("wrote {}", out);
    Ok(())
}
