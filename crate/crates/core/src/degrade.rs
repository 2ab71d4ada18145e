//! Forward degradation of a clean scene.
//!
//! Blur comes first: each anchor kernel is applied to the tile it influences
//! (FFT convolution over a reflect-padded window), and tiles are blended with
//! the anchors' bilinear hat weights. The depth map then mixes the blurred and
//! clean images, `I_blur = M * (K * I) + (1 - M) * I`. A modulated tilt field
//! finally warps both the blurred image (the turbulent output) and the clean
//! image (the tilt-only output), and is inverted into backward supervision
//! flow.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::config::OpticalConfig;
use crate::depth::{depth_modulation, DepthMap, ModulationMap, PathGeometry};
use crate::error::{Error, Result};
use crate::flow::{forward_splat_invert, BackwardFlow};
use crate::raster::{clamp_taps, FlowField, Image};
use crate::spectral::Fft2;
use crate::tilt::{modulate_displacement, synthesize_raw_field, TiltSpectrumParams};
use crate::zernike::{OpticsModel, PsfGrid};

/// Clean RGB image in `[0, 1]` with its aligned relative depth.
#[derive(Clone, Debug)]
pub struct CleanScene {
    pub image: Image,
    pub depth: DepthMap,
    /// Source identifier, usually the file stem.
    pub identifier: String,
}

impl CleanScene {
    pub fn new(image: Image, depth: DepthMap, identifier: impl Into<String>) -> Result<Self> {
        if image.dims() != depth.dims() {
            let (w, h) = image.dims();
            let (dw, dh) = depth.dims();
            return Err(Error::shape(format!("{}x{}", w, h), format!("{}x{}", dw, dh)));
        }
        if !image.is_finite() {
            return Err(Error::InvalidInput("clean image contains NaN/Inf".into()));
        }
        if !image.in_unit_range() {
            return Err(Error::InvalidInput("clean image values must lie in [0, 1]".into()));
        }
        Ok(CleanScene {
            image,
            depth,
            identifier: identifier.into(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// Strength and random stream of one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleParams {
    pub d_over_r0: f64,
    pub seed: u64,
}

/// Scalar facts about one degradation, for metadata and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleInfo {
    pub source_id: String,
    pub d_over_r0: f64,
    pub seed: u64,
    pub z_max: f64,
    pub flat_field: bool,
    pub tilt_rms_px: f64,
    pub max_energy_outside_crop: f64,
    /// Fraction of pixels covered by the forward splat before filling.
    pub valid_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct DegradedSample {
    /// Blurred and warped.
    pub turb: Image,
    /// Warped clean image.
    pub tilt: Image,
    /// Blurred, not warped.
    pub blur: Image,
    pub modulation: ModulationMap,
    /// Modulated displacement `Delta`.
    pub forward_flow: FlowField,
    pub backward_flow: BackwardFlow,
    pub info: SampleInfo,
}

fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Convolution of one anchor tile: `(K * I)(x)` for `x` in the tile, every
/// channel, row-major interleaved.
fn convolve_tile(image: &Image, kernel: &crate::zernike::Psf, xs: (usize, usize), ys: (usize, usize)) -> Vec<f64> {
    let (w, h) = image.dims();
    let ch = image.channels();
    let r = kernel.radius();
    let tw = xs.1 - xs.0 + 1;
    let th = ys.1 - ys.0 + 1;
    let fw = tw + 2 * r;
    let fh = th + 2 * r;
    let fft = Fft2::new(fh, fw);

    let mut kspec = vec![Complex64::new(0.0, 0.0); fw * fh];
    let ri = r as isize;
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            let row = dy.rem_euclid(fh as isize) as usize;
            let col = dx.rem_euclid(fw as isize) as usize;
            kspec[row * fw + col].re = kernel.at(dx, dy);
        }
    }
    fft.forward(&mut kspec);

    let mut out = vec![0.0; tw * th * ch];
    let norm = (fw * fh) as f64;
    // two real channels ride in one complex transform
    for c0 in (0..ch).step_by(2) {
        let c1 = (c0 + 1 < ch).then_some(c0 + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); fw * fh];
        for py in 0..fh {
            let sy = reflect(ys.0 as isize + py as isize - ri, h);
            for px in 0..fw {
                let sx = reflect(xs.0 as isize + px as isize - ri, w);
                let re = image.get(sx, sy, c0) as f64;
                let im = c1.map_or(0.0, |c| image.get(sx, sy, c) as f64);
                buf[py * fw + px] = Complex64::new(re, im);
            }
        }
        fft.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&kspec) {
            *b *= k;
        }
        fft.inverse(&mut buf);
        for ty in 0..th {
            for tx in 0..tw {
                let v = buf[(ty + r) * fw + tx + r] / norm;
                let o = (ty * tw + tx) * ch;
                out[o + c0] = v.re;
                if let Some(c) = c1 {
                    out[o + c] = v.im;
                }
            }
        }
    }
    out
}

/// `(K(x) * I)(x)`: each pixel sees the hat-weighted blend of the
/// convolutions by its enclosing anchor kernels. Borders use half-sample
/// symmetric reflection.
pub fn convolve_varying(image: &Image, grid: &PsfGrid) -> Result<Image> {
    let (w, h) = image.dims();
    let layout = grid.layout();
    if (layout.width, layout.height) != (w, h) {
        return Err(Error::shape(
            format!("{}x{}", w, h),
            format!("{}x{}", layout.width, layout.height),
        ));
    }
    let k = grid.kernel_size();
    if k > w || k > h {
        return Err(Error::Domain(format!(
            "kernel size {} exceeds image size {}x{}",
            k, w, h
        )));
    }
    let ch = image.channels();
    let anchors: Vec<(usize, usize)> = (0..layout.rows)
        .flat_map(|r| (0..layout.cols).map(move |c| (r, c)))
        .collect();
    let tiles: Vec<Vec<f64>> = anchors
        .par_iter()
        .map(|&(r, c)| {
            let (xs, ys) = layout.support(r, c);
            convolve_tile(image, grid.kernel(r, c), xs, ys)
        })
        .collect();

    let mut acc = vec![0.0f64; w * h * ch];
    let mut wsum = vec![0.0f64; w * h];
    for (&(r, c), tile) in anchors.iter().zip(&tiles) {
        let (xs, ys) = layout.support(r, c);
        let tw = xs.1 - xs.0 + 1;
        for y in ys.0..=ys.1 {
            for x in xs.0..=xs.1 {
                let wt = layout.hat_weight(r, c, x, y);
                if wt == 0.0 {
                    continue;
                }
                let t = ((y - ys.0) * tw + (x - xs.0)) * ch;
                let i = y * w + x;
                wsum[i] += wt;
                for cc in 0..ch {
                    acc[i * ch + cc] += wt * tile[t + cc];
                }
            }
        }
    }
    let data = acc
        .iter()
        .enumerate()
        .map(|(i, v)| (v / wsum[i / ch]).clamp(0.0, 1.0) as f32)
        .collect();
    Image::from_vec(w, h, ch, data)
}

/// `I_blur = M * (K * I) + (1 - M) * I`.
pub fn spatially_varying_blur(image: &Image, grid: &PsfGrid, m: &ModulationMap) -> Result<Image> {
    let conv = convolve_varying(image, grid)?;
    mix_by_modulation(image, &conv, m)
}

/// Per-pixel `M * blurred + (1 - M) * clean`.
pub fn mix_by_modulation(clean: &Image, blurred: &Image, m: &ModulationMap) -> Result<Image> {
    let (w, h) = clean.dims();
    if blurred.dims() != (w, h) || blurred.channels() != clean.channels() {
        return Err(Error::shape(format!("{}x{}", w, h), format!("{}x{}", blurred.width(), blurred.height())));
    }
    if m.dims() != (w, h) {
        return Err(Error::shape(format!("{}x{}", w, h), format!("{}x{}", m.dims().0, m.dims().1)));
    }
    let ch = clean.channels();
    let mv = m.as_map().values();
    let data = clean
        .data()
        .iter()
        .zip(blurred.data())
        .enumerate()
        .map(|(i, (&a, &b))| {
            let mm = mv[i / ch];
            (mm * b as f64 + (1.0 - mm) * a as f64) as f32
        })
        .collect();
    Image::from_vec(w, h, ch, data)
}

/// Backward bilinear warp: `out(x) = I(x + Delta(x))`, sample coordinates
/// clamped to the border.
pub fn backward_warp(image: &Image, delta: &FlowField) -> Result<Image> {
    let (w, h) = image.dims();
    if delta.dims() != (w, h) {
        return Err(Error::shape(
            format!("{}x{}", w, h),
            format!("{}x{}", delta.width(), delta.height()),
        ));
    }
    if let Some((x, y)) = delta.first_non_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite displacement at pixel ({}, {})",
            x, y
        )));
    }
    let ch = image.channels();
    let mut out = vec![0.0f32; w * h * ch];
    out.par_chunks_mut(w * ch).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let (dx, dy) = delta.get(x, y);
            let (x0, x1, fx) = clamp_taps(x as f64 + dx as f64, w);
            let (y0, y1, fy) = clamp_taps(y as f64 + dy as f64, h);
            for c in 0..ch {
                let at = |xx: usize, yy: usize| image.get(xx, yy, c) as f64;
                let top = (1.0 - fx) * at(x0, y0) + fx * at(x1, y0);
                let bot = (1.0 - fx) * at(x0, y1) + fx * at(x1, y1);
                row[x * ch + c] = ((1.0 - fy) * top + fy * bot) as f32;
            }
        }
    });
    Image::from_vec(w, h, ch, out)
}

/// A validated configuration with its precomputed optics.
pub struct Engine {
    config: OpticalConfig,
    geometry: PathGeometry,
    optics: OpticsModel,
}

impl Engine {
    pub fn new(config: &OpticalConfig) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let geometry = config.path_geometry()?;
        let optics = OpticsModel::new(&config.zernike)?;
        Ok(Engine {
            config,
            geometry,
            optics,
        })
    }

    /// The resolved configuration.
    pub fn config(&self) -> &OpticalConfig {
        &self.config
    }
    pub fn optics(&self) -> &OpticsModel {
        &self.optics
    }

    /// Modulation map for `scene`, honouring the flat-field switch.
    pub fn modulation(&self, scene: &CleanScene) -> Result<ModulationMap> {
        if self.config.dataset.flat_field_mode {
            let (w, h) = scene.dims();
            return Ok(ModulationMap::flat(w, h));
        }
        depth_modulation(&scene.depth, &self.geometry, self.config.geometry.z_max_mode)
            .map_err(|e| e.in_stage("depth_modulation"))
    }

    pub fn degrade(&self, scene: &CleanScene, params: SampleParams) -> Result<DegradedSample> {
        let m = self.modulation(scene)?;
        self.degrade_with_modulation(scene, m, params)
    }

    /// Degrades `scene` under an explicit modulation map. Kernel coefficients
    /// are drawn before the tilt field from one generator seeded by
    /// `params.seed`.
    pub fn degrade_with_modulation(
        &self,
        scene: &CleanScene,
        m: ModulationMap,
        params: SampleParams,
    ) -> Result<DegradedSample> {
        let (w, h) = scene.dims();
        if m.dims() != (w, h) {
            return Err(Error::shape(format!("{}x{}", w, h), format!("{}x{}", m.dims().0, m.dims().1)));
        }
        let d = params.d_over_r0;
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Domain(format!("D/r0 = {} must be finite and >= 0", d)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

        let (blur, max_outside) = if d == 0.0 {
            (scene.image.clone(), 0.0)
        } else {
            let grid = self
                .optics
                .build_psf_grid(w, h, d, &mut rng)
                .map_err(|e| e.in_stage("zernike_optics"))?;
            let mut blur = spatially_varying_blur(&scene.image, &grid, &m).map_err(|e| e.in_stage("blur"))?;
            blur.clamp_unit();
            (blur, grid.max_energy_outside_crop())
        };

        let tilt_params = TiltSpectrumParams::from_config(&self.config.tilt, self.config.zernike.psf_oversample, d)?;
        let raw = synthesize_raw_field(h, w, &tilt_params, &mut rng).map_err(|e| e.in_stage("field_synthesis"))?;
        let delta = modulate_displacement(&raw, &m)?;

        let mut turb = backward_warp(&blur, &delta).map_err(|e| e.in_stage("warp"))?;
        turb.clamp_unit();
        let mut tilt = backward_warp(&scene.image, &delta).map_err(|e| e.in_stage("warp"))?;
        tilt.clamp_unit();
        let backward_flow = forward_splat_invert(&delta).map_err(|e| e.in_stage("flow_inverse"))?;

        let z_max = match self.config.geometry.z_max_mode {
            crate::depth::ZMaxMode::Path => self.geometry.z_max(),
            crate::depth::ZMaxMode::Scene => crate::depth::project_depth(&scene.depth, &self.geometry).max(),
        };
        let info = SampleInfo {
            source_id: scene.identifier.clone(),
            d_over_r0: d,
            seed: params.seed,
            z_max,
            flat_field: self.config.dataset.flat_field_mode,
            tilt_rms_px: tilt_params.tilt_rms_px,
            max_energy_outside_crop: max_outside,
            valid_fraction: backward_flow.valid_count() as f64 / (w * h) as f64,
        };
        Ok(DegradedSample {
            turb,
            tilt,
            blur,
            modulation: m,
            forward_flow: delta,
            backward_flow,
            info,
        })
    }
}

/// One-shot degradation without reusing precomputed optics.
pub fn degrade_scene(scene: &CleanScene, config: &OpticalConfig, params: SampleParams) -> Result<DegradedSample> {
    Engine::new(config)?.degrade(scene, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zernike::{AnchorLayout, Psf};

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| ((x + 2 * y + c) % 17) as f32 / 16.0)
    }

    #[test]
    fn reflect_is_half_sample_symmetric() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
    }

    #[test]
    fn delta_kernels_are_identity() {
        let img = ramp(40, 30);
        let grid = PsfGrid::uniform(AnchorLayout::new(3, 4, 40, 30).unwrap(), Psf::delta(7));
        let out = convolve_varying(&img, &grid).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn box_kernel_matches_direct_sum() {
        let img = ramp(24, 20);
        let k = Psf::uniform_box(5);
        let grid = PsfGrid::uniform(AnchorLayout::new(2, 2, 24, 20).unwrap(), k.clone());
        let out = convolve_varying(&img, &grid).unwrap();
        for y in 0..20 {
            for x in 0..24 {
                let mut s = 0.0;
                for dy in -2isize..=2 {
                    for dx in -2isize..=2 {
                        let sx = reflect(x as isize - dx, 24);
                        let sy = reflect(y as isize - dy, 20);
                        s += k.at(dx, dy) * img.get(sx, sy, 1) as f64;
                    }
                }
                assert!((out.get(x, y, 1) as f64 - s).abs() < 1e-6, "({}, {})", x, y);
            }
        }
    }

    #[test]
    fn zero_modulation_returns_clean() {
        let img = ramp(16, 16);
        let grid = PsfGrid::uniform(AnchorLayout::new(2, 2, 16, 16).unwrap(), Psf::uniform_box(5));
        let m = ModulationMap::constant(16, 16, 0.0).unwrap();
        assert_eq!(spatially_varying_blur(&img, &grid, &m).unwrap(), img);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let img = ramp(8, 8);
        let grid = PsfGrid::uniform(AnchorLayout::new(2, 2, 8, 8).unwrap(), Psf::delta(9));
        assert!(matches!(convolve_varying(&img, &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn warp_identity_and_ramp_shift() {
        let img = ramp(12, 9);
        assert_eq!(backward_warp(&img, &FlowField::zeros(12, 9)).unwrap(), img);
        let lin = Image::from_fn(12, 1, 1, |x, _, _| x as f32 / 12.0);
        let out = backward_warp(&lin, &FlowField::constant(12, 1, 0.5, 0.0)).unwrap();
        for x in 0..11 {
            assert!((out.get(x, 0, 0) as f64 - (x as f64 + 0.5) / 12.0).abs() < 1e-6);
        }
        assert_eq!(out.get(11, 0, 0), lin.get(11, 0, 0));
    }

    #[test]
    fn warp_rejects_nan() {
        let mut d = FlowField::zeros(4, 4);
        d.set(0, 0, (0.0, f32::INFINITY));
        assert!(backward_warp(&ramp(4, 4), &d).is_err());
    }
}
