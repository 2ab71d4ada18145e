//! Dense tilt displacement fields.
//!
//! White Gaussian noise is shaped in the frequency domain by the amplitude
//! `(kappa^2 + kappa0^2)^(exponent / 4) * exp(-(f * inner_scale_px)^2)`
//! (power slope `exponent` between the outer-scale roll-off
//! `kappa0 = 2 pi / corr_length_px` and a Gaussian inner-scale cut at
//! frequency `f` in cycles per pixel; zero at DC), inverse transformed, and
//! rescaled to an exact per-axis RMS. The depth
//! modulation map then scales the field pixel by pixel.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::config::{TiltConfig, TiltModel};
use crate::depth::ModulationMap;
use crate::error::{Error, Result};
use crate::raster::FlowField;
use crate::spectral::{signed_bin, Fft2};
use crate::zernike::noll_covariance;

/// Displacement field; see [`FlowField`] for the axis convention.
pub type DisplacementField = FlowField;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TiltSpectrumParams {
    pub corr_length_px: f64,
    /// Per-axis RMS displacement at `M = 1`, pixels.
    pub tilt_rms_px: f64,
    pub spectral_exponent: f64,
    /// Gaussian high-frequency cut, pixels; 0 disables it.
    pub inner_scale_px: f64,
    pub model: TiltModel,
}

impl TiltSpectrumParams {
    pub fn new(corr_length_px: f64, tilt_rms_px: f64) -> Self {
        TiltSpectrumParams {
            corr_length_px,
            tilt_rms_px,
            spectral_exponent: -11.0 / 3.0,
            inner_scale_px: crate::config::DEFAULT_INNER_SCALE_PX,
            model: TiltModel::IndependentAxes,
        }
    }

    /// Parameters for a sample of strength `d_over_r0`.
    pub fn from_config(cfg: &TiltConfig, psf_oversample: usize, d_over_r0: f64) -> Result<Self> {
        Ok(TiltSpectrumParams {
            corr_length_px: cfg.corr_length_px,
            tilt_rms_px: tilt_rms_px(cfg, psf_oversample, d_over_r0)?,
            spectral_exponent: cfg.spectral_exponent,
            inner_scale_px: cfg.inner_scale_px,
            model: cfg.model,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.corr_length_px > 0.0 && self.corr_length_px.is_finite()) {
            return Err(Error::Domain("corr_length_px must be > 0".into()));
        }
        if !(self.tilt_rms_px >= 0.0 && self.tilt_rms_px.is_finite()) {
            return Err(Error::Domain("tilt_rms_px must be >= 0".into()));
        }
        if !(self.inner_scale_px >= 0.0 && self.inner_scale_px.is_finite()) {
            return Err(Error::Domain("inner_scale_px must be >= 0".into()));
        }
        if !self.spectral_exponent.is_finite() {
            return Err(Error::Domain("spectral exponent must be finite".into()));
        }
        Ok(())
    }
}

/// Per-axis standard deviation of a Noll tilt coefficient at `D/r0 = 1`.
pub fn unit_tilt_sigma() -> f64 {
    noll_covariance(3, 1.0).map(|c| c[(1, 1)].sqrt()).unwrap_or(f64::NAN)
}

/// Per-axis tilt RMS in pixels: the configured value, or
/// `sigma_tilt * (D/r0)^(5/6) * px_per_tilt_unit`.
pub fn tilt_rms_px(cfg: &TiltConfig, psf_oversample: usize, d_over_r0: f64) -> Result<f64> {
    if let Some(r) = cfg.rms_px {
        return Ok(r);
    }
    if !(d_over_r0 >= 0.0) {
        return Err(Error::Domain(format!("D/r0 = {} must be >= 0", d_over_r0)));
    }
    let k_px = cfg
        .px_per_tilt_unit
        .unwrap_or_else(|| crate::config::default_px_per_tilt_unit(psf_oversample));
    Ok(unit_tilt_sigma() * d_over_r0.powf(5.0 / 6.0) * k_px)
}

fn white_spectrum<R: Rng + ?Sized>(fft: &Fft2, rng: &mut R) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..fft.rows() * fft.cols())
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    fft.forward(&mut buf);
    buf
}

/// Shaping amplitude at bin `(row, col)`.
fn amplitude(params: &TiltSpectrumParams, row: usize, col: usize, h: usize, w: usize) -> f64 {
    if row == 0 && col == 0 {
        return 0.0;
    }
    let fx = signed_bin(col, w) / w as f64;
    let fy = signed_bin(row, h) / h as f64;
    let k2 = (2.0 * PI).powi(2) * (fx * fx + fy * fy);
    let k0 = 2.0 * PI / params.corr_length_px;
    let f2 = fx * fx + fy * fy;
    (k2 + k0 * k0).powf(params.spectral_exponent / 4.0) * (-f2 * params.inner_scale_px.powi(2)).exp()
}

fn to_real_rescaled(fft: &Fft2, mut spectrum: Vec<Complex64>, rms: f64) -> Vec<f64> {
    fft.inverse(&mut spectrum);
    let n = spectrum.len() as f64;
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re / n).collect();
    let mean = out.iter().sum::<f64>() / n;
    for v in &mut out {
        *v -= mean;
    }
    let empirical = (out.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let scale = if empirical > 0.0 { rms / empirical } else { 0.0 };
    for v in &mut out {
        *v *= scale;
    }
    out
}

/// Unmodulated displacement field `F^-1(Phi)`, rescaled so each axis has
/// empirical RMS `tilt_rms_px`. Deterministic given the generator state.
pub fn synthesize_raw_field<R: Rng + ?Sized>(
    height: usize,
    width: usize,
    params: &TiltSpectrumParams,
    rng: &mut R,
) -> Result<DisplacementField> {
    if height < 8 || width < 8 {
        return Err(Error::Domain(format!(
            "tilt field needs at least 8x8 pixels, got {}x{}",
            width, height
        )));
    }
    params.validate()?;
    if params.tilt_rms_px == 0.0 {
        return Ok(FlowField::zeros(width, height));
    }
    let fft = Fft2::new(height, width);
    let (xs, ys) = match params.model {
        TiltModel::IndependentAxes => {
            let mut axes = Vec::with_capacity(2);
            for _ in 0..2 {
                let mut spectrum = white_spectrum(&fft, rng);
                for r in 0..height {
                    for c in 0..width {
                        spectrum[r * width + c] *= amplitude(params, r, c, height, width);
                    }
                }
                axes.push(to_real_rescaled(&fft, spectrum, params.tilt_rms_px));
            }
            let ys = axes.pop().unwrap();
            (axes.pop().unwrap(), ys)
        }
        TiltModel::PhaseGradient => {
            let spectrum = white_spectrum(&fft, rng);
            let mut gx = spectrum.clone();
            let mut gy = spectrum;
            for r in 0..height {
                for c in 0..width {
                    let a = amplitude(params, r, c, height, width);
                    let i = r * width + c;
                    // the unpaired Nyquist bins would leave an imaginary residue
                    let kx = if 2 * c == width { 0.0 } else { 2.0 * PI * signed_bin(c, width) / width as f64 };
                    let ky = if 2 * r == height { 0.0 } else { 2.0 * PI * signed_bin(r, height) / height as f64 };
                    gx[i] *= Complex64::new(0.0, kx * a);
                    gy[i] *= Complex64::new(0.0, ky * a);
                }
            }
            (
                to_real_rescaled(&fft, gx, params.tilt_rms_px),
                to_real_rescaled(&fft, gy, params.tilt_rms_px),
            )
        }
    };
    FlowField::from_planes(width, height, &xs, &ys)
}

/// `Delta(x) = M(x) * raw(x)` on both channels.
pub fn modulate_displacement(raw: &DisplacementField, m: &ModulationMap) -> Result<DisplacementField> {
    let (w, h) = raw.dims();
    if m.dims() != (w, h) {
        return Err(Error::shape(
            format!("{}x{}", w, h),
            format!("{}x{}", m.dims().0, m.dims().1),
        ));
    }
    let mut out = raw.clone();
    for (v, &mv) in out.data_mut().chunks_exact_mut(2).zip(m.as_map().values()) {
        v[0] = (mv * v[0] as f64) as f32;
        v[1] = (mv * v[1] as f64) as f32;
    }
    Ok(out)
}
