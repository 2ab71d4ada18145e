//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use turbsynth::depth::DepthMap;
use turbsynth::raster::{Image, ScalarMap};
use turbsynth::synthetic::smooth_texture;

/// Bessel function of the first kind: power series for small arguments,
/// otherwise `(1/pi) int_0^pi cos(n t - x sin t) dt` by the trapezoid rule,
/// which converges geometrically on this periodic integrand once the node
/// count exceeds `x`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    if x.abs() < 8.0 {
        let q = -(x * x) / 4.0;
        let mut term = (x / 2.0).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for m in 1..60 {
            term *= q / (m as f64 * (m + n) as f64);
            sum += term;
        }
        return sum;
    }
    let m = 64 + 2 * x.abs().ceil() as usize;
    let h = PI / m as f64;
    let f = |t: f64| (n as f64 * t - x * t.sin()).cos();
    let mut s = 0.5 * (f(0.0) + f(PI));
    for i in 1..m {
        s += f(i as f64 * h);
    }
    s * h / PI
}

/// Variance of a Noll mode of radial order `n` at `D/r0 = 1` by direct
/// quadrature of the Kolmogorov phase spectrum against the Zernike Fourier
/// transform:
/// `(n+1) * (2/pi) * c * 2^(-5/3) * int_0^inf k^(-14/3) J_{n+1}(2 pi k)^2 dk`.
pub fn noll_variance_quadrature(n: u32) -> f64 {
    let c = statrs::function::gamma::gamma(11.0 / 6.0).powi(2) / (2.0 * PI.powf(11.0 / 3.0))
        * (24.0 / 5.0 * statrs::function::gamma::gamma(6.0 / 5.0)).powf(5.0 / 6.0);
    // k = u^3 removes the k^(-2/3) endpoint singularity of the n = 1 integrand
    let g = |u: f64| {
        if u == 0.0 {
            return if n == 1 { 3.0 * PI.powi(4) / 4.0 } else { 0.0 };
        }
        let k = u * u * u;
        3.0 * u * u * k.powf(-14.0 / 3.0) * bessel_j(n + 1, 2.0 * PI * k).powi(2)
    };
    // the tail beyond k = 40 contributes below 1e-9 relative
    let upper = 40f64.cbrt();
    let steps = 40_000;
    let h = upper / steps as f64;
    let mut s = g(0.0) + g(upper);
    for i in 1..steps {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
    }
    let integral = s * h / 3.0;
    (n as f64 + 1.0) * 2.0 / PI * c * 2f64.powf(-5.0 / 3.0) * integral
}

/// Vertical linear depth ramp from 0 at the top row to 1 at the bottom.
pub fn ramp_depth(width: usize, height: usize) -> DepthMap {
    DepthMap::new(ScalarMap::from_fn(width, height, |_, y| y as f64 / (height - 1) as f64)).unwrap()
}

/// Smooth test images used by the photometric round-trip checks.
pub fn smooth_images(count: usize, size: usize) -> Vec<Image> {
    (0..count as u64).map(|i| smooth_texture(size, size, 6.0, 100 + i)).collect()
}

/// Sorted `(relative path, bytes)` of every file below `root`.
pub fn tree_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
