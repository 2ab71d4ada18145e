//! Procedural scenes for demos and tests: smooth band-limited RGB textures
//! with a ground-plane style depth layout.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::degrade::CleanScene;
use crate::depth::DepthMap;
use crate::error::Result;
use crate::raster::{Image, ScalarMap};

struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

/// Sum of a few low-frequency sinusoids per channel around mid-grey.
/// `max_cycles` bounds the spatial frequency in cycles per image.
pub fn smooth_texture(width: usize, height: usize, max_cycles: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<Wave> = (0..6)
        .map(|_| Wave {
            fx: rng.random_range(-max_cycles..=max_cycles),
            fy: rng.random_range(-max_cycles..=max_cycles),
            phase: rng.random_range(0.0..2.0 * PI),
            amp: [rng.random_range(0.0..0.07), rng.random_range(0.0..0.07), rng.random_range(0.0..0.07)],
        })
        .collect();
    Image::from_fn(width, height, 3, |x, y, c| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let s: f64 = waves
            .iter()
            .map(|w| w.amp[c] * (2.0 * PI * (w.fx * u + w.fy * v) + w.phase).sin())
            .sum();
        (0.5 + s).clamp(0.0, 1.0) as f32
    })
}

/// Depth falling from 1 at the top row to `near` at the bottom, with a
/// nearer disc-shaped object.
pub fn ground_depth(width: usize, height: usize, near: f64, seed: u64) -> DepthMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD3);
    let cx = rng.random_range(0.25..0.75) * width as f64;
    let cy = rng.random_range(0.5..0.8) * height as f64;
    let r = rng.random_range(0.1..0.2) * width.min(height) as f64;
    let map = ScalarMap::from_fn(width, height, |x, y| {
        let t = y as f64 / (height.max(2) - 1) as f64;
        let ground = 1.0 - (1.0 - near) * t;
        let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
        // smooth edge over two pixels
        let inside = (0.5 - (d - r) / 2.0).clamp(0.0, 1.0);
        ground * (1.0 - inside) + near * 0.5 * inside
    });
    DepthMap::new(map).expect("procedural depth stays inside [0, 1]")
}

/// Scene `seed` of the procedural corpus.
pub fn scene(width: usize, height: usize, seed: u64) -> Result<CleanScene> {
    CleanScene::new(
        smooth_texture(width, height, 6.0, seed),
        ground_depth(width, height, 0.0, seed),
        format!("synthetic{:03}", seed),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_valid_and_deterministic() {
        let a = scene(40, 30, 3).unwrap();
        let b = scene(40, 30, 3).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.depth, b.depth);
        assert!(a.image.in_unit_range());
        let (lo, hi) = a.depth.as_map().min_max();
        assert!(lo >= 0.0 && hi == 1.0);
    }
}
