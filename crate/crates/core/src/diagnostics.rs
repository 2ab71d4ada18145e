//! Statistical checks of the synthesized turbulence: power-law fits, radial
//! power spectra, coefficient variance scaling and a flow round trip.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::flow::{fixed_point_residuals, forward_splat_invert, median, splat_invert_unfilled, BackwardFlow};
use crate::spectral::{signed_bin, Fft2};
use crate::tilt::{synthesize_raw_field, TiltSpectrumParams};
use crate::zernike::{noll_covariance, CoefficientSampler};

/// Least-squares line through `(ln x, ln y)`: returns `(slope, intercept)`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Domain("need at least two paired points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Azimuthally averaged power spectrum of a real plane, binned by integer
/// radial frequency in cycles per image side (`min(w, h)` normalization).
/// Entry `k` holds the mean power of bins with rounded radius `k`.
pub fn radial_power_spectrum(plane: &[f64], width: usize, height: usize) -> Result<Vec<f64>> {
    if plane.len() != width * height {
        return Err(Error::shape(width * height, plane.len()));
    }
    let fft = Fft2::new(height, width);
    let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut buf);
    let side = width.min(height) as f64;
    let kmax = (side / 2.0) as usize;
    let mut sum = vec![0.0; kmax + 1];
    let mut count = vec![0usize; kmax + 1];
    for r in 0..height {
        for c in 0..width {
            let fx = signed_bin(c, width) / width as f64 * side;
            let fy = signed_bin(r, height) / height as f64 * side;
            let k = (fx * fx + fy * fy).sqrt().round() as usize;
            if k <= kmax {
                sum[k] += buf[r * width + c].norm_sqr();
                count[k] += 1;
            }
        }
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect())
}

/// Log-log slope of the mean radial spectrum of `fields` raw tilt fields
/// (x component) over radial frequencies `band.0..=band.1`.
pub fn tilt_spectral_slope(
    params: &TiltSpectrumParams,
    size: usize,
    fields: usize,
    seed: u64,
    band: (usize, usize),
) -> Result<f64> {
    let mut mean: Vec<f64> = Vec::new();
    for f in 0..fields {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(f as u64));
        let field = synthesize_raw_field(size, size, params, &mut rng)?;
        let ps = radial_power_spectrum(&field.channel(0), size, size)?;
        if mean.is_empty() {
            mean = vec![0.0; ps.len()];
        }
        for (m, p) in mean.iter_mut().zip(ps) {
            *m += p / fields as f64;
        }
    }
    let hi = band.1.min(mean.len() - 1);
    let ks: Vec<f64> = (band.0..=hi).map(|k| k as f64).collect();
    let ps: Vec<f64> = (band.0..=hi).map(|k| mean[k]).collect();
    Ok(log_log_fit(&ks, &ps)?.0)
}

/// Empirical variance of each Noll mode over `draws` samples at `d_over_r0`.
pub fn coefficient_variances(modes: usize, d_over_r0: f64, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = CoefficientSampler::new(&noll_covariance(modes, d_over_r0)?, d_over_r0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; modes];
    let mut sq = vec![0.0; modes];
    for _ in 0..draws {
        let s = sampler.sample(&mut rng);
        for (j, c) in s.coefficients.iter().enumerate() {
            sum[j] += c;
            sq[j] += c * c;
        }
    }
    let n = draws as f64;
    Ok(sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| (q - s * s / n) / (n - 1.0))
        .collect())
}

/// Slope of total sampled aberration variance (modes 2..J) against `D/r0`.
pub fn variance_scaling_slope(modes: usize, strengths: &[f64], draws: usize, seed: u64) -> Result<f64> {
    let mut totals = Vec::with_capacity(strengths.len());
    for (i, &d) in strengths.iter().enumerate() {
        let v = coefficient_variances(modes, d, draws, seed.wrapping_add(i as u64))?;
        totals.push(v[1..].iter().sum::<f64>());
    }
    Ok(log_log_fit(strengths, &totals)?.0)
}

/// Median fixed-point residual over covered pixels for a raw tilt field of
/// the given RMS.
pub fn flow_round_trip_residual(size: usize, params: &TiltSpectrumParams, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = synthesize_raw_field(size, size, params, &mut rng)?;
    let filled = forward_splat_invert(&delta)?;
    let valid = splat_invert_unfilled(&delta)?.valid;
    let bwd = BackwardFlow {
        field: filled.field,
        valid,
    };
    let mut r = fixed_point_residuals(&delta, &bwd, true);
    Ok(median(&mut r))
}

/// One self-test outcome.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Reduced-size statistical suite: spectral slope, variance scaling, tilt
/// variance and flow round trip.
pub fn self_test() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let slope = tilt_spectral_slope(&TiltSpectrumParams::new(512.0, 1.0), 256, 8, 11, (3, 30))?;
    out.push(Check {
        name: "tilt spectral slope",
        passed: (slope + 11.0 / 3.0).abs() < 0.3,
        detail: format!("{:.3} (target -3.667 +/- 0.3)", slope),
    });
    let vs = variance_scaling_slope(15, &[1.0, 2.0, 4.0, 8.0], 2000, 5)?;
    out.push(Check {
        name: "variance scaling",
        passed: (vs - 5.0 / 3.0).abs() < 0.05,
        detail: format!("{:.4} (target 1.6667 +/- 0.05)", vs),
    });
    let v = coefficient_variances(3, 1.0, 4000, 9)?;
    let oracle = noll_covariance(3, 1.0)?[(1, 1)];
    let rel = ((v[1] + v[2]) / 2.0 / oracle - 1.0).abs();
    out.push(Check {
        name: "tilt variance",
        passed: rel < 0.08,
        detail: format!("relative error {:.4}", rel),
    });
    let r = flow_round_trip_residual(256, &TiltSpectrumParams::new(512.0, 2.0), 3)?;
    out.push(Check {
        name: "flow round trip",
        passed: r < 0.05,
        detail: format!("median residual {:.4} px", r),
    });
    Ok(out)
}
