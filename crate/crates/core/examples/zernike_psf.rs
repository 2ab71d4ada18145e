//! Sample Kolmogorov Zernike coefficients and synthesize blur kernels at a
//! few turbulence strengths; writes each kernel as a grayscale PNG.
//!
//! `cargo run --release --example zernike_psf -- [out_dir]`

use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use turbsynth::io;
use turbsynth::raster::ScalarMap;
use turbsynth::zernike::{build_basis, noll_covariance, noll_to_nm, sample_coefficients, PsfSynthesizer};

fn main() -> turbsynth::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "psf_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| turbsynth::Error::io(&out, e))?;

    let modes = 36;
    let basis = Arc::new(build_basis(modes, 128)?);
    let synth = PsfSynthesizer::new(basis, 33, 2)?;

    let cov = noll_covariance(modes, 1.0)?;
    println!("unit-strength variances (rad^2):");
    for j in [2, 4, 7, 11] {
        let (n, m) = noll_to_nm(j)?;
        println!("  Z{:<2} (n={}, m={:+}) {:.6}", j, n, m, cov[(j - 1, j - 1)]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in [0.0, 1.0, 3.0, 5.0] {
        let sample = sample_coefficients(&noll_covariance(modes, d)?, d, &mut rng)?;
        let psf = synth.synthesize(&sample.coefficients);
        let peak = psf.weights().iter().cloned().fold(0.0, f64::max);
        println!(
            "D/r0 = {:.1}: sum {:.9}, peak {:.4}, second moment {:.3} px^2, outside crop {:.2}%",
            d,
            psf.sum(),
            peak,
            psf.second_moment(),
            100.0 * psf.energy_outside_crop()
        );
        let k = psf.size();
        let img = ScalarMap::from_fn(k, k, |x, y| psf.weights()[y * k + x] / peak).to_image();
        io::write_image(out.join(format!("psf_d{:.0}.png", d)), &img)?;
    }
    println!("wrote kernels to {}", out.display());
    Ok(())
}
