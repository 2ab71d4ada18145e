//! Generator configuration: optical path, turbulence range, Zernike/PSF
//! sampling, tilt-field spectrum and dataset options.
//!
//! Every section has desk-scale defaults, so an empty TOML document is a
//! complete configuration. [`OpticalConfig::resolved`] fills derived values
//! (such as `z_max`) so the manifest echoes exactly what was used.

use serde::{Deserialize, Serialize};

use crate::depth::{PathGeometry, ZMaxMode};
use crate::error::ConfigError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalConfig {
    pub geometry: GeometryConfig,
    pub turbulence: TurbulenceConfig,
    pub zernike: ZernikeConfig,
    pub tilt: TiltConfig,
    pub dataset: DatasetConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Total optical path length `L`, metres.
    #[serde(rename = "L")]
    pub path_length: f64,
    /// Baseline offset `s` in `(0, 1)`.
    #[serde(rename = "s")]
    pub baseline_offset: f64,
    /// Normalization distance; `None` means `L`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    pub z_max_mode: ZMaxMode,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            path_length: 1000.0,
            baseline_offset: 0.5,
            z_max: None,
            z_max_mode: ZMaxMode::Path,
        }
    }
}

impl GeometryConfig {
    pub fn path_geometry(&self) -> Result<PathGeometry, ConfigError> {
        let z_max = self.z_max.unwrap_or(self.path_length);
        PathGeometry::with_z_max(self.path_length, self.baseline_offset, z_max)
            .map_err(|e| ConfigError::invalid("geometry", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthSampling {
    /// `D/r0` uniform over the configured range.
    #[default]
    Uniform,
    /// Cycle weak/medium/strong by sample index, uniform inside each class.
    Stratified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbulenceConfig {
    /// Inclusive `[lo, hi]` range of `D/r0` at the full path length.
    pub d_over_r0: [f64; 2],
    pub sampling: StrengthSampling,
}

impl Default for TurbulenceConfig {
    fn default() -> Self {
        TurbulenceConfig {
            d_over_r0: [0.5, 6.0],
            sampling: StrengthSampling::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZernikeConfig {
    /// Number of Noll modes `J`.
    pub modes: usize,
    /// Pupil grid side length.
    pub pupil_resolution: usize,
    /// Odd side length of each blur kernel, image pixels.
    pub kernel_size: usize,
    /// Anchor grid `[rows, cols]`.
    pub grid: [usize; 2],
    /// Gaussian correlation length between anchors, in anchor spacings.
    /// `0` gives independent anchors; very large values make them identical.
    pub correlation_length: f64,
    /// FFT size over pupil size; image pixels are `lambda / (oversample * D)`.
    pub psf_oversample: usize,
}

impl Default for ZernikeConfig {
    fn default() -> Self {
        ZernikeConfig {
            modes: 36,
            pupil_resolution: 256,
            kernel_size: 33,
            grid: [8, 8],
            correlation_length: 1.5,
            psf_oversample: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltModel {
    /// Two independent spectrally shaped fields, one per axis.
    #[default]
    IndependentAxes,
    /// Spectral gradient of a single scalar phase screen.
    PhaseGradient,
}

pub const DEFAULT_INNER_SCALE_PX: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TiltConfig {
    /// Outer-scale roll-off length of the tilt spectrum, pixels.
    pub corr_length_px: f64,
    /// Power-spectrum slope.
    pub spectral_exponent: f64,
    /// Gaussian high-frequency cut of the tilt spectrum, pixels; 0 disables.
    pub inner_scale_px: f64,
    pub model: TiltModel,
    /// Fixed per-axis RMS displacement at `M = 1`. When absent it is derived
    /// from `D/r0` via the Kolmogorov tilt variance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rms_px: Option<f64>,
    /// Pixels per radian of Noll tilt coefficient; `None` means the
    /// diffraction geometry value `2 * psf_oversample / pi`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub px_per_tilt_unit: Option<f64>,
}

impl Default for TiltConfig {
    fn default() -> Self {
        TiltConfig {
            corr_length_px: 512.0,
            spectral_exponent: -11.0 / 3.0,
            inner_scale_px: DEFAULT_INNER_SCALE_PX,
            model: TiltModel::IndependentAxes,
            rms_px: None,
            px_per_tilt_unit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Total samples; scenes are visited round-robin.
    pub samples: usize,
    pub global_seed: u64,
    /// Force `M = 1` everywhere (isoplanatic baseline).
    pub flat_field_mode: bool,
    /// Also write `blur.png`.
    pub persist_blur: bool,
    /// Also write `flow_fwd.d2fl` and `modulation.png`.
    pub debug_outputs: bool,
    /// Stem suffix identifying depth maps next to clean images.
    pub depth_suffix: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            samples: 64,
            global_seed: 0,
            flat_field_mode: false,
            persist_blur: false,
            debug_outputs: false,
            depth_suffix: "_depth".into(),
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be finite and > 0, got {}", v)))
    }
}

impl OpticalConfig {
    /// Checks every field against its documented constraint; the error names
    /// the offending field path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        positive("geometry.L", g.path_length)?;
        if !(g.baseline_offset > 0.0 && g.baseline_offset < 1.0) {
            return Err(ConfigError::invalid(
                "geometry.s",
                format!("must lie in the open interval (0,1), got {}", g.baseline_offset),
            ));
        }
        if let Some(z) = g.z_max {
            positive("geometry.z_max", z)?;
            if z < g.path_length * g.baseline_offset {
                return Err(ConfigError::invalid(
                    "geometry.z_max",
                    format!("must be >= L*s = {}", g.path_length * g.baseline_offset),
                ));
            }
            if g.z_max_mode == ZMaxMode::Path && z < g.path_length {
                return Err(ConfigError::invalid(
                    "geometry.z_max",
                    format!("must be >= L = {} so every M(x) <= 1", g.path_length),
                ));
            }
        }

        let [lo, hi] = self.turbulence.d_over_r0;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(ConfigError::invalid(
                "turbulence.d_over_r0",
                format!("need 0 <= lo <= hi, got [{}, {}]", lo, hi),
            ));
        }

        let z = &self.zernike;
        if z.modes < 3 {
            return Err(ConfigError::invalid("zernike.modes", "must be >= 3"));
        }
        if z.pupil_resolution < 32 {
            return Err(ConfigError::invalid("zernike.pupil_resolution", "must be >= 32"));
        }
        if z.kernel_size % 2 == 0 || z.kernel_size == 0 {
            return Err(ConfigError::invalid("zernike.kernel_size", "must be odd"));
        }
        if z.kernel_size > z.pupil_resolution * z.psf_oversample {
            return Err(ConfigError::invalid(
                "zernike.kernel_size",
                "must not exceed the PSF FFT size (pupil_resolution * psf_oversample)",
            ));
        }
        if z.grid[0] < 2 || z.grid[1] < 2 {
            return Err(ConfigError::invalid("zernike.grid", "needs at least 2x2 anchors"));
        }
        if !(z.correlation_length >= 0.0) {
            return Err(ConfigError::invalid("zernike.correlation_length", "must be >= 0"));
        }
        if z.psf_oversample < 1 {
            return Err(ConfigError::invalid("zernike.psf_oversample", "must be >= 1"));
        }

        let t = &self.tilt;
        positive("tilt.corr_length_px", t.corr_length_px)?;
        if !(t.spectral_exponent.is_finite() && t.spectral_exponent < 0.0) {
            return Err(ConfigError::invalid("tilt.spectral_exponent", "must be negative"));
        }
        if !(t.inner_scale_px.is_finite() && t.inner_scale_px >= 0.0) {
            return Err(ConfigError::invalid("tilt.inner_scale_px", "must be >= 0"));
        }
        if let Some(r) = t.rms_px {
            if !(r.is_finite() && r >= 0.0) {
                return Err(ConfigError::invalid("tilt.rms_px", "must be >= 0"));
            }
        }
        if let Some(k) = t.px_per_tilt_unit {
            if !(k.is_finite() && k >= 0.0) {
                return Err(ConfigError::invalid("tilt.px_per_tilt_unit", "must be >= 0"));
            }
        }

        if self.dataset.samples == 0 {
            return Err(ConfigError::invalid("dataset.samples", "must be >= 1"));
        }
        if self.dataset.depth_suffix.is_empty() {
            return Err(ConfigError::invalid("dataset.depth_suffix", "must not be empty"));
        }
        Ok(())
    }

    /// Copy with derived optional values made explicit.
    pub fn resolved(&self) -> OpticalConfig {
        let mut c = self.clone();
        if c.geometry.z_max.is_none() {
            c.geometry.z_max = Some(c.geometry.path_length);
        }
        if c.tilt.px_per_tilt_unit.is_none() {
            c.tilt.px_per_tilt_unit = Some(default_px_per_tilt_unit(c.zernike.psf_oversample));
        }
        c
    }

    pub fn path_geometry(&self) -> Result<PathGeometry, ConfigError> {
        self.geometry.path_geometry()
    }
}

/// Image displacement per radian of Noll tilt coefficient.
///
/// A Noll tilt `a * 2 rho cos(theta)` over a pupil of radius `R` deflects the
/// beam by `2 a / pi` in units of `lambda / D`; an image pixel spans
/// `lambda / (oversample * D)`.
pub fn default_px_per_tilt_unit(psf_oversample: usize) -> f64 {
    2.0 * psf_oversample as f64 / std::f64::consts::PI
}
