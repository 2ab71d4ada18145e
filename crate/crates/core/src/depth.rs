//! Depth-to-distance projection and the depth modulation map.
//!
//! A relative depth `d` in `[0, 1]` (1 = farthest) is projected onto the
//! physical path as `z = L * ((1 - s) * d + s)`. Under a uniform `Cn^2`
//! profile the Fried parameter falls as `z^(-3/5)`, so the accumulated
//! turbulence strength relative to `z_max` is `M = (z / z_max)^(3/5)`.

use log::warn;

use crate::error::{Error, Result};
use crate::raster::ScalarMap;

/// Kolmogorov path exponent shared by the Fried scaling and the modulation map.
pub const PATH_EXPONENT: f64 = 3.0 / 5.0;

/// Relative depth in `[0, 1]`, 1 = farthest.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap(ScalarMap);

impl DepthMap {
    /// Validates that every value is finite and inside `[0, 1]`.
    pub fn new(map: ScalarMap) -> Result<Self> {
        if let Some((i, v)) = map
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidInput(format!(
                "depth value {} at pixel ({}, {}) is outside [0, 1]",
                v,
                i % map.width(),
                i / map.width()
            )));
        }
        Ok(DepthMap(map))
    }

    /// Clamps out-of-range values into `[0, 1]`, warning once. Non-finite
    /// values are still rejected.
    pub fn clamped(map: ScalarMap) -> Result<Self> {
        if map.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("depth map contains NaN/Inf".into()));
        }
        let outside = map.values().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        if outside == 0 {
            return Ok(DepthMap(map));
        }
        warn!("clamping {} depth values outside [0, 1]", outside);
        Ok(DepthMap(map.map(|v| v.clamp(0.0, 1.0))))
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(ScalarMap::filled(width, height, value))
    }

    pub fn as_map(&self) -> &ScalarMap {
        &self.0
    }
    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

/// Optical path: total length `L` (m), baseline offset `s` in `(0, 1)`, and
/// normalization distance `z_max` (m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathGeometry {
    path_length: f64,
    baseline_offset: f64,
    z_max: f64,
}

impl PathGeometry {
    /// Geometry with `z_max = L`.
    pub fn new(path_length: f64, baseline_offset: f64) -> Result<Self> {
        Self::with_z_max(path_length, baseline_offset, path_length)
    }

    pub fn with_z_max(path_length: f64, baseline_offset: f64, z_max: f64) -> Result<Self> {
        if !(path_length.is_finite() && path_length > 0.0) {
            return Err(Error::Domain(format!("path length {} must be > 0", path_length)));
        }
        if !(baseline_offset > 0.0 && baseline_offset < 1.0) {
            return Err(Error::Domain(format!(
                "baseline offset {} must lie in (0, 1)",
                baseline_offset
            )));
        }
        if !(z_max.is_finite() && z_max > 0.0 && z_max >= path_length * baseline_offset) {
            return Err(Error::Domain(format!(
                "z_max {} must be finite and >= L*s = {}",
                z_max,
                path_length * baseline_offset
            )));
        }
        Ok(PathGeometry {
            path_length,
            baseline_offset,
            z_max,
        })
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }
    pub fn baseline_offset(&self) -> f64 {
        self.baseline_offset
    }
    pub fn z_max(&self) -> f64 {
        self.z_max
    }
}

/// Physical distance along the path for each pixel, metres.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap(ScalarMap);

impl DistanceMap {
    pub fn as_map(&self) -> &ScalarMap {
        &self.0
    }
    /// Largest distance in the scene.
    pub fn max(&self) -> f64 {
        self.0.min_max().1
    }
}

/// Per-pixel turbulence strength `M(x)` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationMap(ScalarMap);

impl ModulationMap {
    /// The isoplanatic baseline: `M = 1` everywhere.
    pub fn flat(width: usize, height: usize) -> Self {
        ModulationMap(ScalarMap::filled(width, height, 1.0))
    }

    /// Wraps an arbitrary map after checking every value lies in `[0, 1]`.
    pub fn from_map(map: ScalarMap) -> Result<Self> {
        if map.values().iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
            return Err(Error::InvalidInput("modulation values must lie in [0, 1]".into()));
        }
        Ok(ModulationMap(map))
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_map(ScalarMap::filled(width, height, value))
    }

    pub fn as_map(&self) -> &ScalarMap {
        &self.0
    }
    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }
}

/// `z(x) = L * ((1 - s) * d(x) + s)`.
pub fn project_depth(depth: &DepthMap, geom: &PathGeometry) -> DistanceMap {
    let l = geom.path_length;
    let s = geom.baseline_offset;
    DistanceMap(depth.0.map(|d| l * ((1.0 - s) * d + s)))
}

/// Fried parameter at distance `z` given its value at the full path `L`:
/// `r0(z) = r0(L) * (L / z)^(3/5)`.
pub fn fried_at_distance(z: f64, r0_at_l: f64, path_length: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("distance {} must be > 0", z)));
    }
    if !(r0_at_l > 0.0 && r0_at_l.is_finite()) {
        return Err(Error::Domain(format!("r0(L) = {} must be > 0", r0_at_l)));
    }
    if !(path_length > 0.0) || z > path_length {
        return Err(Error::Domain(format!(
            "distance {} must lie in (0, L = {}]",
            z, path_length
        )));
    }
    Ok(r0_at_l * (path_length / z).powf(PATH_EXPONENT))
}

/// `M(x) = (z(x) / z_max)^(3/5)`.
pub fn modulation_map(dist: &DistanceMap, z_max: f64) -> Result<ModulationMap> {
    if !(z_max > 0.0 && z_max.is_finite()) {
        return Err(Error::Domain(format!("z_max {} must be > 0", z_max)));
    }
    if let Some(&z) = dist.0.values().iter().find(|&&z| z > z_max || !(z >= 0.0)) {
        return Err(Error::Normalization { z, z_max });
    }
    Ok(ModulationMap(dist.0.map(|z| (z / z_max).powf(PATH_EXPONENT))))
}

/// How `z_max` is chosen for a scene.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMaxMode {
    /// `z_max` from the geometry (defaults to `L`).
    #[default]
    Path,
    /// `z_max` is the largest projected distance in the scene.
    Scene,
}

/// Projects depth and builds the modulation map in one step.
pub fn depth_modulation(depth: &DepthMap, geom: &PathGeometry, mode: ZMaxMode) -> Result<ModulationMap> {
    let dist = project_depth(depth, geom);
    let z_max = match mode {
        ZMaxMode::Path => geom.z_max,
        ZMaxMode::Scene => dist.max(),
    };
    modulation_map(&dist, z_max)
}
