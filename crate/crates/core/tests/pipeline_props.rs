mod common;

use std::collections::HashSet;

use turbsynth::config::StrengthSampling;
use turbsynth::depth::DepthMap;
use turbsynth::metrics::{psnr, ssim};
use turbsynth::pipeline::{
    dataset_digest, generate_dataset, sample_params, sample_seed, validate_dataset, GenerateOptions, SceneSource,
};
use turbsynth::raster::Image;
use turbsynth::synthetic::smooth_texture;
use turbsynth::{categorize_strength, CleanScene, OpticalConfig, StrengthCategory};

fn small_config(samples: usize) -> OpticalConfig {
    let mut cfg = OpticalConfig::default();
    cfg.zernike.modes = 15;
    cfg.zernike.pupil_resolution = 32;
    cfg.zernike.kernel_size = 9;
    cfg.zernike.grid = [2, 2];
    cfg.dataset.samples = samples;
    cfg
}

fn scenes(count: u64, size: usize) -> Vec<SceneSource> {
    (0..count)
        .map(|i| SceneSource::Memory(turbsynth::synthetic::scene(size, size, i).unwrap()))
        .collect()
}

#[test]
fn category_sweep_matches_thresholds() {
    for i in 0..=600 {
        let d = i as f64 / 100.0;
        let expected = if i < 225 {
            StrengthCategory::Weak
        } else if i <= 375 {
            StrengthCategory::Medium
        } else {
            StrengthCategory::Strong
        };
        assert_eq!(categorize_strength(d).unwrap(), expected, "D/r0 = {}", d);
    }
}

#[test]
fn sample_seeds_are_injective() {
    for global in [0u64, 7, u64::MAX] {
        let seeds: HashSet<u64> = (0..1_000_000u64).map(|i| sample_seed(global, i)).collect();
        assert_eq!(seeds.len(), 1_000_000);
    }
}

#[test]
fn strengths_are_uniform_over_the_range() {
    let mut cfg = OpticalConfig::default();
    cfg.turbulence.d_over_r0 = [0.5, 6.0];
    let n = 100_000;
    let mut u: Vec<f64> = (0..n as u64).map(|i| (sample_params(&cfg, i).d_over_r0 - 0.5) / 5.5).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks = u
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n as f64 - v).max(v - i as f64 / n as f64))
        .fold(0.0, f64::max);
    // asymptotic 1% critical value of the one-sample statistic
    let critical = 1.6276 / (n as f64).sqrt();
    assert!(ks < critical, "KS statistic {} >= {}", ks, critical);
}

#[test]
fn stratified_sampling_cycles_through_all_classes() {
    let mut cfg = OpticalConfig::default();
    cfg.turbulence.sampling = StrengthSampling::Stratified;
    for i in 0..300u64 {
        let c = categorize_strength(sample_params(&cfg, i).d_over_r0).unwrap();
        assert_eq!(c, StrengthCategory::ALL[(i % 3) as usize]);
    }
}

#[test]
fn zero_strength_dataset_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(1);
    cfg.turbulence.d_over_r0 = [0.0, 0.0];
    generate_dataset(&cfg, &scenes(1, 32), dir.path(), &GenerateOptions::default()).unwrap();
    let sample = dir.path().join("000000_synthetic000");
    let clean = std::fs::read(sample.join("clean.png")).unwrap();
    assert_eq!(std::fs::read(sample.join("turb.png")).unwrap(), clean);
    assert_eq!(std::fs::read(sample.join("tilt.png")).unwrap(), clean);
    let flow = turbsynth::io::read_flow(sample.join("flow_bwd.d2fl")).unwrap();
    assert!(flow.data().iter().all(|&v| v == 0.0));
}

fn tuple_bytes(root: &std::path::Path) -> Vec<Vec<u8>> {
    let s = root.join("000000_s");
    ["turb.png", "tilt.png", "flow_bwd.d2fl"].iter().map(|f| std::fs::read(s.join(f)).unwrap()).collect()
}

#[test]
fn flat_field_mode_matches_depth_aware_only_at_the_far_plane() {
    let img = smooth_texture(32, 32, 6.0, 4);
    for (depth, same) in [(DepthMap::constant(32, 32, 1.0).unwrap(), true), (common::ramp_depth(32, 32), false)] {
        let scene = vec![SceneSource::Memory(CleanScene::new(img.clone(), depth, "s").unwrap())];
        let mut cfg = small_config(1);
        cfg.turbulence.d_over_r0 = [4.0, 4.0];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, &scene, a.path(), &GenerateOptions::default()).unwrap();
        cfg.dataset.flat_field_mode = true;
        generate_dataset(&cfg, &scene, b.path(), &GenerateOptions::default()).unwrap();
        assert_eq!(tuple_bytes(a.path()) == tuple_bytes(b.path()), same);
    }
}

#[test]
fn worker_count_does_not_change_the_tree() {
    let cfg = small_config(10);
    let src = scenes(4, 40);
    let mut digests = Vec::new();
    for workers in [1, 8, 3] {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, &src, dir.path(), &GenerateOptions { workers }).unwrap();
        digests.push(dataset_digest(dir.path()).unwrap());
    }
    assert!(digests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn validation_enforces_manifest_completeness() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    generate_dataset(&small_config(3), &scenes(2, 32), root, &GenerateOptions::default()).unwrap();
    assert!(validate_dataset(root, 1).unwrap().ok());

    std::fs::create_dir(root.join("stray")).unwrap();
    let r = validate_dataset(root, 1).unwrap();
    assert!(r.problems.iter().any(|p| p.contains("stray")));
    std::fs::remove_dir(root.join("stray")).unwrap();

    std::fs::remove_dir_all(root.join("000001_synthetic001")).unwrap();
    let r = validate_dataset(root, 1).unwrap();
    assert!(r.problems.iter().any(|p| p.starts_with("000001_synthetic001")));

    std::fs::remove_file(root.join("manifest.json")).unwrap();
    assert!(validate_dataset(root, 1).is_err());
}

#[test]
fn tampered_category_is_inconsistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(1);
    cfg.turbulence.d_over_r0 = [1.0, 1.0];
    generate_dataset(&cfg, &scenes(1, 32), dir.path(), &GenerateOptions::default()).unwrap();
    let meta_path = dir.path().join("000000_synthetic000/meta.json");
    let text = std::fs::read_to_string(&meta_path).unwrap();
    std::fs::write(&meta_path, text.replace("\"weak\"", "\"strong\"")).unwrap();
    let r = validate_dataset(dir.path(), 0).unwrap();
    assert!(r.problems.iter().any(|p| p.contains("inconsistent")), "{:?}", r.problems);
}

#[test]
fn metric_examples() {
    let a = Image::filled(16, 16, 3, 0.25);
    let b = Image::filled(16, 16, 3, 0.75);
    assert!((psnr(&a, &b).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-9);
    let c = Image::filled(16, 16, 3, 0.5);
    assert_eq!(ssim(&c, &c.clone()).unwrap(), 1.0);
    let t = smooth_texture(64, 64, 8.0, 3);
    let inv = Image::from_vec(64, 64, 3, t.data().iter().map(|v| 1.0 - v).collect()).unwrap();
    assert!(ssim(&t, &inv).unwrap() < 0.2);
    assert!(psnr(&t, &Image::new(32, 32, 3)).is_err());
}
