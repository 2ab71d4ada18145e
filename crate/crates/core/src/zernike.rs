//! Zernike aberration statistics and spatially varying blur kernels.
//!
//! Modes follow Noll's ordering and normalization (unit RMS over the unit
//! disk). Coefficient statistics use Noll's Kolmogorov covariance, and each
//! kernel is the squared modulus of the Fourier transform of the pupil
//! function `exp(i * sum_j a_j Z_j)`. Tilt modes (Noll 2, 3) never enter a
//! kernel: tilt is realized as pixel displacement by the tilt field.
//!
//! | j | 1 | 2 | 3 | 4 | 5 | 6 | 7 | 8 | 9 | 10 | 11 |
//! |---|---|---|---|---|---|---|---|---|---|----|----|
//! | n | 0 | 1 | 1 | 2 | 2 | 2 | 3 | 3 | 3 | 3  | 4  |
//! | m | 0 | 1 | -1| 0 | -2| 2 | -1| 1 | -3| 3  | 0  |
//!
//! Even `j` carries `cos(m theta)` (positive `m`), odd `j` carries
//! `sin(m theta)` (negative `m`).

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::config::ZernikeConfig;
use crate::error::{Error, Result};
use crate::spectral::{signed_bin, Fft2};

/// Fraction of kernel energy outside the crop above which a warning is
/// recorded.
pub const CROP_WARNING_FRACTION: f64 = 0.05;

/// Noll index to `(n, m)`; `m` is signed (negative for sine modes).
pub fn noll_to_nm(j: usize) -> Result<(u32, i32)> {
    if j < 1 {
        return Err(Error::Domain("Noll index must be >= 1".into()));
    }
    let mut n = (((8 * j - 7) as f64).sqrt() as usize - 1) / 2;
    // guard the float sqrt at row boundaries
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    while n * (n + 1) / 2 >= j {
        n -= 1;
    }
    let p = j - n * (n + 1) / 2;
    let m_abs = if n % 2 == 0 {
        2 * (p / 2)
    } else {
        2 * ((p - 1) / 2) + 1
    } as i32;
    let m = if m_abs != 0 && j % 2 == 1 { -m_abs } else { m_abs };
    Ok((n as u32, m))
}

fn ln_factorial(k: u32) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Radial polynomial `R_n^|m|(r)`.
pub fn radial(n: u32, m_abs: u32, r: f64) -> f64 {
    debug_assert!(m_abs <= n && (n - m_abs) % 2 == 0);
    let half_sum = (n + m_abs) / 2;
    let half_diff = (n - m_abs) / 2;
    (0..=half_diff)
        .map(|k| {
            let coef = (ln_factorial(n - k)
                - ln_factorial(k)
                - ln_factorial(half_sum - k)
                - ln_factorial(half_diff - k))
            .exp()
            .round();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * coef * r.powi((n - 2 * k) as i32)
        })
        .sum()
}

/// Noll-normalized Zernike mode `j` at polar position `(r, theta)`.
pub fn zernike(j: usize, r: f64, theta: f64) -> Result<f64> {
    let (n, m) = noll_to_nm(j)?;
    let norm = ((n + 1) as f64).sqrt();
    let rad = radial(n, m.unsigned_abs(), r);
    Ok(match m {
        0 => norm * rad,
        m if m > 0 => norm * 2f64.sqrt() * rad * (m as f64 * theta).cos(),
        m => norm * 2f64.sqrt() * rad * ((-m) as f64 * theta).sin(),
    })
}

/// Modes `1..=J` evaluated on the pixels of a `P x P` grid that fall inside
/// the unit disk.
#[derive(Clone, Debug)]
pub struct ZernikeBasis {
    mode_count: usize,
    pupil_resolution: usize,
    /// Row-major pixel indices inside the disk.
    disk: Vec<usize>,
    /// Mode-major values, `mode_count * disk.len()`.
    values: Vec<f64>,
}

impl ZernikeBasis {
    pub fn mode_count(&self) -> usize {
        self.mode_count
    }
    pub fn pupil_resolution(&self) -> usize {
        self.pupil_resolution
    }
    /// Pixel count inside the disk, the discrete disk area.
    pub fn disk_area(&self) -> usize {
        self.disk.len()
    }
    pub fn disk_pixels(&self) -> &[usize] {
        &self.disk
    }

    /// Values of Noll mode `j` over the disk pixels.
    pub fn mode(&self, j: usize) -> &[f64] {
        assert!(j >= 1 && j <= self.mode_count, "mode {} out of range", j);
        let a = self.disk.len();
        &self.values[(j - 1) * a..j * a]
    }

    /// Full `P x P` raster of mode `j`, zero outside the disk.
    pub fn mode_raster(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.pupil_resolution * self.pupil_resolution];
        for (&idx, &v) in self.disk.iter().zip(self.mode(j)) {
            out[idx] = v;
        }
        out
    }

    /// Discrete inner product over the disk.
    pub fn inner_product(&self, a: usize, b: usize) -> f64 {
        self.mode(a).iter().zip(self.mode(b)).map(|(x, y)| x * y).sum()
    }

    /// Pupil phase `sum_j c_j Z_j` over the disk pixels, skipping the first
    /// `skip` modes.
    pub fn phase(&self, coefficients: &[f64], skip: usize) -> Vec<f64> {
        let a = self.disk.len();
        let mut phase = vec![0.0; a];
        for (j, &c) in coefficients.iter().enumerate().take(self.mode_count).skip(skip) {
            if c == 0.0 {
                continue;
            }
            let mode = &self.values[j * a..(j + 1) * a];
            for (p, z) in phase.iter_mut().zip(mode) {
                *p += c * z;
            }
        }
        phase
    }
}

/// Pixel centre of index `i` on a `P`-grid mapped to `[-1, 1]`.
#[inline]
fn pupil_coord(i: usize, p: usize) -> f64 {
    (i as f64 + 0.5 - p as f64 / 2.0) / (p as f64 / 2.0)
}

pub fn build_basis(mode_count: usize, pupil_resolution: usize) -> Result<ZernikeBasis> {
    if mode_count < 1 {
        return Err(Error::Domain("mode count must be >= 1".into()));
    }
    if pupil_resolution < 8 {
        return Err(Error::Domain("pupil resolution must be >= 8".into()));
    }
    let p = pupil_resolution;
    let mut disk = Vec::new();
    let mut polar = Vec::new();
    for row in 0..p {
        let y = pupil_coord(row, p);
        for col in 0..p {
            let x = pupil_coord(col, p);
            let r2 = x * x + y * y;
            if r2 <= 1.0 {
                disk.push(row * p + col);
                polar.push((r2.sqrt(), y.atan2(x)));
            }
        }
    }
    let nm: Vec<(u32, i32)> = (1..=mode_count).map(noll_to_nm).collect::<Result<_>>()?;
    let values: Vec<f64> = nm
        .par_iter()
        .flat_map_iter(|&(n, m)| {
            let norm = ((n + 1) as f64).sqrt();
            let polar = &polar;
            polar.iter().map(move |&(r, t)| {
                let rad = radial(n, m.unsigned_abs(), r);
                match m {
                    0 => norm * rad,
                    m if m > 0 => norm * 2f64.sqrt() * rad * (m as f64 * t).cos(),
                    m => norm * 2f64.sqrt() * rad * ((-m) as f64 * t).sin(),
                }
            })
        })
        .collect();
    Ok(ZernikeBasis {
        mode_count,
        pupil_resolution,
        disk,
        values,
    })
}

/// Kolmogorov phase power-spectrum constant `Phi(k) = c * r0^(-5/3) * k^(-11/3)`
/// (`k` in cycles per unit length).
pub fn kolmogorov_constant() -> f64 {
    (24.0 / 5.0 * gamma(6.0 / 5.0)).powf(5.0 / 6.0) * gamma(11.0 / 6.0).powi(2)
        / (2.0 * PI.powf(11.0 / 3.0))
}

/// Covariance of Noll coefficients `j`, `k` at `D/r0 = 1`, radians^2.
fn unit_covariance_entry(j: usize, k: usize) -> Result<f64> {
    let (n, m) = noll_to_nm(j)?;
    let (n2, m2) = noll_to_nm(k)?;
    if m.unsigned_abs() != m2.unsigned_abs() {
        return Ok(0.0);
    }
    // sine and cosine modes of the same |m| are uncorrelated
    if m != 0 && (j % 2) != (k % 2) {
        return Ok(0.0);
    }
    if n == 0 || n2 == 0 {
        return Ok(0.0);
    }
    let (nf, n2f) = (n as f64, n2 as f64);
    let ma = m.unsigned_abs();
    let sign = if ((n + n2 - 2 * ma) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    // integral of J_{n+1}(t) J_{n'+1}(t) t^{-14/3} over (0, inf), mapped from
    // the pupil-radius frequency domain with R/r0 = 1/2
    let lambda = 14.0 / 3.0;
    let prefactor = 2.0 * PI * kolmogorov_constant() * 0.5f64.powf(5.0 / 3.0)
        * (2.0 * PI).powf(11.0 / 3.0)
        / (PI * PI)
        * gamma(lambda)
        / 2f64.powf(lambda);
    let g = gamma((nf + n2f - 5.0 / 3.0) / 2.0)
        / (gamma((nf - n2f + 17.0 / 3.0) / 2.0)
            * gamma((n2f - nf + 17.0 / 3.0) / 2.0)
            * gamma((nf + n2f + 23.0 / 3.0) / 2.0));
    Ok(prefactor * sign * ((nf + 1.0) * (n2f + 1.0)).sqrt() * g)
}

/// `J x J` Zernike coefficient covariance (rad^2) under Kolmogorov statistics,
/// scaled by `(D/r0)^(5/3)`. Piston row and column are zero.
pub fn noll_covariance(mode_count: usize, d_over_r0: f64) -> Result<DMatrix<f64>> {
    if mode_count < 3 {
        return Err(Error::Domain("covariance needs at least 3 modes".into()));
    }
    if !(d_over_r0 >= 0.0 && d_over_r0.is_finite()) {
        return Err(Error::Domain(format!("D/r0 = {} must be >= 0", d_over_r0)));
    }
    let scale = d_over_r0.powf(5.0 / 3.0);
    let mut cov = DMatrix::zeros(mode_count, mode_count);
    for j in 1..=mode_count {
        for k in j..=mode_count {
            let v = unit_covariance_entry(j, k)? * scale;
            cov[(j - 1, k - 1)] = v;
            cov[(k - 1, j - 1)] = v;
        }
    }
    Ok(cov)
}

/// Symmetric square root `V sqrt(L) V^T` of a PSD matrix.
fn symmetric_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::Internal("covariance is not square".into()));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let max_abs = sym.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_abs == 0.0 {
        return Ok(DMatrix::zeros(cov.nrows(), cov.ncols()));
    }
    let eig = SymmetricEigen::new(sym);
    let tol = 1e-10 * max_abs;
    if let Some(&lo) = eig.eigenvalues.iter().find(|&&l| l < -tol) {
        return Err(Error::Internal(format!(
            "covariance is not positive semidefinite (eigenvalue {})",
            lo
        )));
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// One draw of Noll coefficients (index 0 is Noll 1), radians.
#[derive(Clone, Debug, PartialEq)]
pub struct AberrationSample {
    pub coefficients: Vec<f64>,
    pub d_over_r0: f64,
}

/// Colors white Gaussian vectors with a fixed covariance.
#[derive(Clone, Debug)]
pub struct CoefficientSampler {
    factor: DMatrix<f64>,
    d_over_r0: f64,
}

impl CoefficientSampler {
    pub fn new(cov: &DMatrix<f64>, d_over_r0: f64) -> Result<Self> {
        Ok(CoefficientSampler {
            factor: symmetric_sqrt(cov)?,
            d_over_r0,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.factor.nrows()
    }

    /// Maps a unit-variance white vector to a correlated coefficient vector.
    pub fn color(&self, white: &[f64]) -> AberrationSample {
        let w = DVector::from_column_slice(white);
        let c = &self.factor * w;
        AberrationSample {
            coefficients: c.iter().copied().collect(),
            d_over_r0: self.d_over_r0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AberrationSample {
        let white: Vec<f64> = (0..self.mode_count()).map(|_| rng.sample(StandardNormal)).collect();
        self.color(&white)
    }
}

/// Zero-mean Gaussian draw with covariance `cov`.
pub fn sample_coefficients<R: Rng + ?Sized>(
    cov: &DMatrix<f64>,
    d_over_r0: f64,
    rng: &mut R,
) -> Result<AberrationSample> {
    Ok(CoefficientSampler::new(cov, d_over_r0)?.sample(rng))
}

/// Normalized odd-sized blur kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Psf {
    size: usize,
    weights: Vec<f64>,
    energy_outside_crop: f64,
}

impl Psf {
    /// Normalizes `weights` to unit sum.
    pub fn from_weights(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 || weights.len() != size * size {
            return Err(Error::Domain(format!(
                "kernel must be odd and square, got side {} with {} weights",
                size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("kernel weights must be finite and >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidInput("kernel has zero energy".into()));
        }
        Ok(Psf {
            size,
            weights: weights.into_iter().map(|w| w / sum).collect(),
            energy_outside_crop: 0.0,
        })
    }

    /// Discrete delta (identity kernel).
    pub fn delta(size: usize) -> Self {
        let mut w = vec![0.0; size * size];
        w[size * size / 2] = 1.0;
        Psf {
            size,
            weights: w,
            energy_outside_crop: 0.0,
        }
    }

    pub fn uniform_box(size: usize) -> Self {
        Psf {
            size,
            weights: vec![1.0 / (size * size) as f64; size * size],
            energy_outside_crop: 0.0,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }
    pub fn radius(&self) -> usize {
        self.size / 2
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn energy_outside_crop(&self) -> f64 {
        self.energy_outside_crop
    }
    /// Weight at offset `(dx, dy)` from the centre.
    #[inline]
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        self.weights[((dy + r) as usize) * self.size + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Centroid offset from the geometric centre, pixels.
    pub fn centroid(&self) -> (f64, f64) {
        let r = self.radius() as f64;
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for (i, &w) in self.weights.iter().enumerate() {
            sx += w * ((i % self.size) as f64 - r);
            sy += w * ((i / self.size) as f64 - r);
            s += w;
        }
        (sx / s, sy / s)
    }

    /// Mean squared radius about the centroid.
    pub fn second_moment(&self) -> f64 {
        let (cx, cy) = self.centroid();
        let r = self.radius() as f64;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let x = (i % self.size) as f64 - r - cx;
                let y = (i / self.size) as f64 - r - cy;
                w * (x * x + y * y)
            })
            .sum::<f64>()
            / self.sum()
    }

    /// Largest deviation under the square's symmetry group (rotations and
    /// mirrors), relative to the peak weight.
    pub fn radial_asymmetry(&self) -> f64 {
        let n = self.size;
        let peak = self.weights.iter().cloned().fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for y in 0..n {
            for x in 0..n {
                let w = self.weights[y * n + x];
                let images = [
                    (n - 1 - x, y),
                    (x, n - 1 - y),
                    (y, x),
                    (n - 1 - y, x),
                    (n - 1 - x, n - 1 - y),
                ];
                for (ix, iy) in images {
                    worst = worst.max((w - self.weights[iy * n + ix]).abs());
                }
            }
        }
        worst / peak
    }

    pub fn is_valid(&self) -> bool {
        self.size % 2 == 1
            && self.weights.iter().all(|w| *w >= 0.0 && w.is_finite())
            && (self.sum() - 1.0).abs() <= 1e-6
    }
}

/// Fourier-optics kernel synthesis from a shared basis.
pub struct PsfSynthesizer {
    basis: Arc<ZernikeBasis>,
    kernel_size: usize,
    fft_size: usize,
    fft: Fft2,
}

impl PsfSynthesizer {
    pub fn new(basis: Arc<ZernikeBasis>, kernel_size: usize, oversample: usize) -> Result<Self> {
        if kernel_size % 2 == 0 {
            return Err(Error::Domain(format!("kernel size {} must be odd", kernel_size)));
        }
        let fft_size = basis.pupil_resolution() * oversample.max(1);
        if kernel_size > fft_size {
            return Err(Error::Domain(format!(
                "kernel size {} exceeds PSF grid {}",
                kernel_size, fft_size
            )));
        }
        Ok(PsfSynthesizer {
            fft: Fft2::new(fft_size, fft_size),
            basis,
            kernel_size,
            fft_size,
        })
    }

    pub fn basis(&self) -> &ZernikeBasis {
        &self.basis
    }
    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    /// Zero-padded `n x n` pupil field `exp(i * phase)` in the top-left corner.
    fn pupil_field(&self, phase: &[f64]) -> Vec<Complex64> {
        let n = self.fft_size;
        let p = self.basis.pupil_resolution();
        let mut field = vec![Complex64::new(0.0, 0.0); n * n];
        for (&idx, &ph) in self.basis.disk_pixels().iter().zip(phase) {
            field[(idx / p) * n + idx % p] = Complex64::from_polar(1.0, ph);
        }
        field
    }

    /// Centroid of `|F|^2` in signed bins, ignoring the unpaired Nyquist bin
    /// of each axis. The marginal spectra come from 1-D transforms of the
    /// pupil rows and columns (Parseval along the other axis), so the full
    /// 2-D intensity is never formed.
    fn centroid(&self, field: &[Complex64]) -> (f64, f64) {
        let n = self.fft_size;
        let p = self.basis.pupil_resolution();
        let marginal = |data: &[Complex64], by_row: bool| -> (f64, f64) {
            let mut power = vec![0.0; n];
            for i in 0..p {
                for (k, pw) in power.iter_mut().enumerate() {
                    let v = if by_row { data[i * n + k] } else { data[k * n + i] };
                    *pw += v.norm_sqr();
                }
            }
            let (mut m, mut s) = (0.0, 0.0);
            for (k, pw) in power.iter().enumerate() {
                if k != n / 2 {
                    m += pw * signed_bin(k, n);
                    s += pw;
                }
            }
            (m, s)
        };
        let mut rows = field.to_vec();
        self.fft.forward_rows(&mut rows, p);
        let (mx, sx) = marginal(&rows, true);
        let mut cols = rows;
        cols.copy_from_slice(field);
        let first: Vec<usize> = (0..p).collect();
        self.fft.forward_columns(&mut cols, &first);
        let (my, sy) = marginal(&cols, false);
        (mx / sx, my / sy)
    }

    /// Kernel for one coefficient vector. Piston and tilt (Noll 1-3) are
    /// ignored; a pupil phase ramp recentres the kernel on its centroid
    /// before cropping.
    pub fn synthesize(&self, coefficients: &[f64]) -> Psf {
        let n = self.fft_size;
        let p = self.basis.pupil_resolution();
        let k = self.kernel_size;
        let h = (k / 2) as isize;
        let phase = self.basis.phase(coefficients, 3);
        let mut field = self.pupil_field(&phase);
        let (cx, cy) = self.centroid(&field);
        if cx.abs() > 1e-9 || cy.abs() > 1e-9 {
            let ramp = |c: f64| -> Vec<Complex64> {
                (0..p).map(|i| Complex64::from_polar(1.0, -2.0 * PI * c * i as f64 / n as f64)).collect()
            };
            let (rx, ry) = (ramp(cx), ramp(cy));
            for r in 0..p {
                for c in 0..p {
                    field[r * n + c] *= rx[c] * ry[r];
                }
            }
        }
        let crop_cols: Vec<usize> = (-h..=h).map(|u| u.rem_euclid(n as isize) as usize).collect();
        self.fft.forward_rows(&mut field, p);
        self.fft.forward_columns(&mut field, &crop_cols);
        // Parseval: a unit-modulus pupil carries n^2 * area in the image plane
        let total = (n * n * self.basis.disk_area()) as f64;
        let mut weights = Vec::with_capacity(k * k);
        for v in -h..=h {
            let row = v.rem_euclid(n as isize) as usize;
            for &col in &crop_cols {
                weights.push(field[row * n + col].norm_sqr());
            }
        }
        let crop: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= crop;
        }
        Psf {
            size: k,
            weights,
            energy_outside_crop: (1.0 - crop / total).max(0.0),
        }
    }
}

/// Kernel for `sample` on `basis`, Nyquist-sampled (FFT twice the pupil).
pub fn synthesize_psf(sample: &AberrationSample, basis: Arc<ZernikeBasis>, kernel_size: usize) -> Result<Psf> {
    if sample.coefficients.len() != basis.mode_count() {
        return Err(Error::shape(basis.mode_count(), sample.coefficients.len()));
    }
    let psf = PsfSynthesizer::new(basis, kernel_size, 2)?.synthesize(&sample.coefficients);
    if psf.energy_outside_crop > CROP_WARNING_FRACTION {
        warn!(
            "{:.1}% of kernel energy falls outside the {}x{} crop",
            100.0 * psf.energy_outside_crop,
            kernel_size,
            kernel_size
        );
    }
    Ok(psf)
}

/// Regular grid of kernel anchors spanning the image corners.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnchorLayout {
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
}

impl AnchorLayout {
    pub fn new(rows: usize, cols: usize, width: usize, height: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::Domain("anchor grid needs at least 2x2 anchors".into()));
        }
        if width < 1 || height < 1 {
            return Err(Error::Domain("empty image".into()));
        }
        Ok(AnchorLayout {
            rows,
            cols,
            width,
            height,
        })
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    fn spacing(n_anchors: usize, extent: usize) -> f64 {
        (extent.max(2) - 1) as f64 / (n_anchors - 1) as f64
    }

    /// Pixel position of anchor `(row, col)`.
    pub fn position(&self, row: usize, col: usize) -> (f64, f64) {
        (
            col as f64 * Self::spacing(self.cols, self.width),
            row as f64 * Self::spacing(self.rows, self.height),
        )
    }

    /// Cell index and fractional offset of `p` along one axis.
    fn axis_cell(p: f64, n_anchors: usize, extent: usize) -> (usize, f64) {
        let t = p / Self::spacing(n_anchors, extent);
        let cell = (t.floor().max(0.0) as usize).min(n_anchors - 2);
        (cell, (t - cell as f64).clamp(0.0, 1.0))
    }

    /// The four enclosing anchors of pixel `(x, y)` and their bilinear
    /// weights, ordered (top-left, top-right, bottom-left, bottom-right).
    pub fn enclosing(&self, x: usize, y: usize) -> [(usize, f64); 4] {
        let (cx, fx) = Self::axis_cell(x as f64, self.cols, self.width);
        let (cy, fy) = Self::axis_cell(y as f64, self.rows, self.height);
        let i = cy * self.cols + cx;
        [
            (i, (1.0 - fx) * (1.0 - fy)),
            (i + 1, fx * (1.0 - fy)),
            (i + self.cols, (1.0 - fx) * fy),
            (i + self.cols + 1, fx * fy),
        ]
    }

    /// Bilinear weight of anchor `(row, col)` at pixel `(x, y)`.
    pub fn hat_weight(&self, row: usize, col: usize, x: usize, y: usize) -> f64 {
        let (ax, ay) = self.position(row, col);
        let sx = Self::spacing(self.cols, self.width);
        let sy = Self::spacing(self.rows, self.height);
        let wx = (1.0 - (x as f64 - ax).abs() / sx).max(0.0);
        let wy = (1.0 - (y as f64 - ay).abs() / sy).max(0.0);
        wx * wy
    }

    /// Inclusive pixel range where anchor `(row, col)` has nonzero weight.
    pub fn support(&self, row: usize, col: usize) -> ((usize, usize), (usize, usize)) {
        let sx = Self::spacing(self.cols, self.width);
        let sy = Self::spacing(self.rows, self.height);
        let (ax, ay) = self.position(row, col);
        let lo = |a: f64, s: f64| (a - s).floor().max(0.0) as usize;
        let hi = |a: f64, s: f64, n: usize| ((a + s).ceil() as usize).min(n - 1);
        (
            (lo(ax, sx), hi(ax, sx, self.width)),
            (lo(ay, sy), hi(ay, sy, self.height)),
        )
    }
}

/// Per-anchor kernels and the coefficients they came from.
#[derive(Clone, Debug)]
pub struct PsfGrid {
    layout: AnchorLayout,
    kernels: Vec<Psf>,
    coefficients: Vec<AberrationSample>,
}

impl PsfGrid {
    pub fn new(layout: AnchorLayout, kernels: Vec<Psf>, coefficients: Vec<AberrationSample>) -> Result<Self> {
        if kernels.len() != layout.count() {
            return Err(Error::shape(layout.count(), kernels.len()));
        }
        if kernels.windows(2).any(|w| w[0].size != w[1].size) {
            return Err(Error::Domain("anchor kernels must share one size".into()));
        }
        Ok(PsfGrid {
            layout,
            kernels,
            coefficients,
        })
    }

    /// Every anchor holds `kernel`.
    pub fn uniform(layout: AnchorLayout, kernel: Psf) -> Self {
        PsfGrid {
            kernels: vec![kernel; layout.count()],
            layout,
            coefficients: Vec::new(),
        }
    }

    pub fn layout(&self) -> &AnchorLayout {
        &self.layout
    }
    pub fn kernels(&self) -> &[Psf] {
        &self.kernels
    }
    pub fn kernel(&self, row: usize, col: usize) -> &Psf {
        &self.kernels[row * self.layout.cols + col]
    }
    pub fn coefficients(&self) -> &[AberrationSample] {
        &self.coefficients
    }
    pub fn kernel_size(&self) -> usize {
        self.kernels[0].size
    }
    pub fn max_energy_outside_crop(&self) -> f64 {
        self.kernels.iter().map(|k| k.energy_outside_crop).fold(0.0, f64::max)
    }
}

/// Gaussian smoothing weights between anchors, in anchor-spacing units.
fn anchor_weights(layout: &AnchorLayout, correlation_length: f64) -> Vec<f64> {
    let n = layout.count();
    let mut w = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let dr = (a / layout.cols) as f64 - (b / layout.cols) as f64;
            let dc = (a % layout.cols) as f64 - (b % layout.cols) as f64;
            let d2 = dr * dr + dc * dc;
            w[a * n + b] = if correlation_length == 0.0 {
                if a == b { 1.0 } else { 0.0 }
            } else {
                (-d2 / (2.0 * correlation_length * correlation_length)).exp()
            };
        }
    }
    w
}

/// Precomputed optics for one Zernike configuration: basis, kernel
/// synthesizer and unit-strength covariance factor.
pub struct OpticsModel {
    config: ZernikeConfig,
    synthesizer: PsfSynthesizer,
    unit_sampler: CoefficientSampler,
}

impl OpticsModel {
    pub fn new(config: &ZernikeConfig) -> Result<Self> {
        let basis = Arc::new(build_basis(config.modes, config.pupil_resolution)?);
        let synthesizer = PsfSynthesizer::new(basis, config.kernel_size, config.psf_oversample)?;
        let unit_sampler = CoefficientSampler::new(&noll_covariance(config.modes, 1.0)?, 1.0)?;
        Ok(OpticsModel {
            config: config.clone(),
            synthesizer,
            unit_sampler,
        })
    }

    pub fn config(&self) -> &ZernikeConfig {
        &self.config
    }
    pub fn synthesizer(&self) -> &PsfSynthesizer {
        &self.synthesizer
    }

    pub fn layout(&self, width: usize, height: usize) -> Result<AnchorLayout> {
        AnchorLayout::new(self.config.grid[0], self.config.grid[1], width, height)
    }

    /// Spatially correlated coefficient vectors, one per anchor in row-major
    /// order. White draws are smoothed across anchors and rescaled so every
    /// anchor keeps the Kolmogorov marginal covariance.
    pub fn sample_anchor_coefficients<R: Rng + ?Sized>(
        &self,
        layout: &AnchorLayout,
        d_over_r0: f64,
        rng: &mut R,
    ) -> Result<Vec<AberrationSample>> {
        if !(d_over_r0 >= 0.0 && d_over_r0.is_finite()) {
            return Err(Error::Domain(format!("D/r0 = {} must be >= 0", d_over_r0)));
        }
        let j = self.config.modes;
        let n = layout.count();
        let white: Vec<f64> = (0..n * j).map(|_| rng.sample(StandardNormal)).collect();
        let w = anchor_weights(layout, self.config.correlation_length);
        let amplitude = d_over_r0.powf(5.0 / 6.0);
        Ok((0..n)
            .map(|a| {
                let row = &w[a * n..(a + 1) * n];
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let mixed: Vec<f64> = (0..j)
                    .map(|m| row.iter().enumerate().map(|(b, wb)| wb * white[b * j + m]).sum::<f64>() / norm)
                    .collect();
                let mut s = self.unit_sampler.color(&mixed);
                for c in &mut s.coefficients {
                    *c *= amplitude;
                }
                s.d_over_r0 = d_over_r0;
                s
            })
            .collect())
    }

    /// One kernel per anchor. Coefficients are drawn sequentially from `rng`;
    /// kernels are synthesized in parallel.
    pub fn build_psf_grid<R: Rng + ?Sized>(
        &self,
        width: usize,
        height: usize,
        d_over_r0: f64,
        rng: &mut R,
    ) -> Result<PsfGrid> {
        let layout = self.layout(width, height)?;
        let coefficients = self.sample_anchor_coefficients(&layout, d_over_r0, rng)?;
        let kernels: Vec<Psf> = coefficients
            .par_iter()
            .map(|s| self.synthesizer.synthesize(&s.coefficients))
            .collect();
        let grid = PsfGrid::new(layout, kernels, coefficients)?;
        let outside = grid.max_energy_outside_crop();
        if outside > CROP_WARNING_FRACTION {
            warn!(
                "D/r0 = {:.3}: up to {:.1}% of kernel energy outside the {}-pixel crop",
                d_over_r0,
                100.0 * outside,
                self.config.kernel_size
            );
        }
        Ok(grid)
    }
}

pub fn build_psf_grid<R: Rng + ?Sized>(
    config: &ZernikeConfig,
    width: usize,
    height: usize,
    d_over_r0: f64,
    rng: &mut R,
) -> Result<PsfGrid> {
    OpticsModel::new(config)?.build_psf_grid(width, height, d_over_r0, rng)
}
