use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use turbsynth::depth::ModulationMap;
use turbsynth::raster::ScalarMap;
use turbsynth::tilt::{modulate_displacement, synthesize_raw_field, TiltSpectrumParams};

fn raw(seed: u64, size: usize) -> turbsynth::raster::FlowField {
    synthesize_raw_field(size, size, &TiltSpectrumParams::new(512.0, 2.0), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn modulation_is_linear_in_the_field(seed in 0u64..1000, e in -4i32..4, a in 0.1f32..3.0, m in 0.0f64..=1.0) {
        let r = raw(seed, 16);
        let map = ModulationMap::from_map(ScalarMap::from_fn(16, 16, |x, y| m * (x + y) as f64 / 30.0)).unwrap();
        // power-of-two scales commute with the product exactly
        let p = 2f32.powi(e);
        let lhs = modulate_displacement(&r.scaled(p), &map).unwrap();
        let rhs = modulate_displacement(&r, &map).unwrap().scaled(p);
        prop_assert_eq!(lhs.data(), rhs.data());
        let lhs = modulate_displacement(&r.scaled(a), &map).unwrap();
        let rhs = modulate_displacement(&r, &map).unwrap().scaled(a);
        for (u, v) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((u - v).abs() <= 2.0 * f32::EPSILON * u.abs().max(v.abs()));
        }
    }
}

fn axis_correlation(f: &turbsynth::raster::FlowField) -> f64 {
    let (x, y) = (f.channel(0), f.channel(1));
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn axes_are_uncorrelated() {
    // 100 x 100 pixels with a short outer scale, so one realization holds
    // enough independent structure for a 0.05 bound
    let mut params = TiltSpectrumParams::new(4.0, 2.0);
    params.inner_scale_px = 0.0;
    for seed in 0..10 {
        let f = synthesize_raw_field(100, 100, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let r = axis_correlation(&f);
        assert!(r.abs() < 0.05, "seed {}: correlation {}", seed, r);
    }
}

#[test]
fn default_calibration_axes_are_uncorrelated_on_average() {
    let n = 200;
    let rs: Vec<f64> = (0..n).map(|seed| axis_correlation(&raw(seed, 64))).collect();
    let mean = rs.iter().sum::<f64>() / n as f64;
    let sd = (rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt(), "mean {} sd {}", mean, sd);
}

#[test]
fn fields_are_reproducible_per_seed() {
    assert_eq!(raw(3, 64), raw(3, 64));
    assert_ne!(raw(3, 64), raw(4, 64));
}

#[test]
fn half_modulation_halves_exactly() {
    let r = raw(1, 32);
    let half = modulate_displacement(&r, &ModulationMap::constant(32, 32, 0.5).unwrap()).unwrap();
    for (h, v) in half.data().iter().zip(r.data()) {
        assert_eq!(*h, v * 0.5);
    }
}
