//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turbsynth::config::OpticalConfig;
use turbsynth::degrade::{backward_warp, spatially_varying_blur};
use turbsynth::depth::{depth_modulation, DepthMap, ModulationMap, PathGeometry, ZMaxMode};
use turbsynth::diagnostics::{coefficient_variances, tilt_spectral_slope, variance_scaling_slope};
use turbsynth::flow::{fixed_point_residuals, forward_splat_invert, median, splat_invert_unfilled, BackwardFlow};
use turbsynth::metrics::psnr;
use turbsynth::pipeline::{self, dataset_digest, generate_dataset, GenerateOptions, PersistOptions, SceneSource};
use turbsynth::raster::Image;
use turbsynth::tilt::{synthesize_raw_field, TiltSpectrumParams};
use turbsynth::zernike::OpticsModel;
use turbsynth::{categorize_strength, io, reference, CleanScene, Engine, SampleParams, StrengthCategory};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn modulation_numerics() -> Outcome {
    let t = Instant::now();
    let n = 256;
    let (l, s) = (1000.0, 0.9);
    let depth = common::ramp_depth(n, n);
    let m = depth_modulation(&depth, &PathGeometry::new(l, s).unwrap(), ZMaxMode::Path).unwrap();
    let elapsed = t.elapsed();
    let mut worst = 0.0f64;
    for y in 0..n {
        for x in 0..n {
            let d = depth.as_map().get(x, y);
            let oracle = ((l * ((1.0 - s) * d + s)) / l).powf(0.6);
            worst = worst.max((m.get(x, y) - oracle).abs());
        }
    }
    check(
        worst <= 1e-9 && secs(elapsed) < 1.0,
        format!("max |M - (z/L)^0.6| = {:.1e} (<= 1e-9), {:.3} s (< 1 s)", worst, secs(elapsed)),
    )
}

fn power_law_statistics() -> Outcome {
    let t = Instant::now();
    let slope = variance_scaling_slope(36, &[1.0, 2.0, 4.0, 8.0], 10_000, 1).unwrap();
    let v = coefficient_variances(36, 1.0, 10_000, 2).unwrap();
    let oracle = common::noll_variance_quadrature(1);
    let (e2, e3) = ((v[1] / oracle - 1.0).abs(), (v[2] / oracle - 1.0).abs());
    let elapsed = secs(t.elapsed());
    check(
        (slope - 5.0 / 3.0).abs() <= 0.05 && e2 <= 0.05 && e3 <= 0.05 && elapsed < 60.0,
        format!(
            "variance slope {:.4} (5/3 +/- 0.05); tilt variance error Z2 {:.2}% Z3 {:.2}% vs quadrature {:.6} (<= 5%); {:.1} s (< 60 s)",
            slope,
            100.0 * e2,
            100.0 * e3,
            oracle,
            elapsed
        ),
    )
}

fn spectral_slope() -> Outcome {
    let t = Instant::now();
    let params = TiltSpectrumParams::from_config(&OpticalConfig::default().tilt, 2, 3.0).unwrap();
    let slope = tilt_spectral_slope(&params, 256, 50, 1000, (3, 30)).unwrap();
    let elapsed = secs(t.elapsed());
    check(
        (slope + 11.0 / 3.0).abs() <= 0.3 && elapsed < 30.0,
        format!("slope {:.3} over 3..30 cycles/image, 50 fields (-11/3 +/- 0.3); {:.1} s (< 30 s)", slope, elapsed),
    )
}

fn psf_validity() -> Outcome {
    let config = OpticalConfig::default();
    let optics = OpticsModel::new(&config.zernike).unwrap();
    let layout = optics.layout(256, 256).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut kernels = 0;
    let mut worst_sum = 0.0f64;
    let mut negative = 0;
    while kernels < 1000 {
        let d = rng.random_range(0.0..6.0);
        for s in optics.sample_anchor_coefficients(&layout, d, &mut rng).unwrap().iter().take(10) {
            let psf = optics.synthesizer().synthesize(&s.coefficients);
            worst_sum = worst_sum.max((psf.sum() - 1.0).abs());
            negative += psf.weights().iter().filter(|&&w| w < 0.0).count();
            kernels += 1;
        }
    }
    let asym = optics.synthesizer().synthesize(&vec![0.0; config.zernike.modes]).radial_asymmetry();
    check(
        negative == 0 && worst_sum <= 1e-6 && asym < 1e-3,
        format!(
            "{} kernels: {} negative weights, max |sum - 1| = {:.1e} (<= 1e-6); unaberrated asymmetry {:.1e} (< 1e-3)",
            kernels, negative, worst_sum, asym
        ),
    )
}

fn degenerate_reductions() -> Outcome {
    let n = 256;
    let scene = CleanScene::new(turbsynth::synthetic::smooth_texture(n, n, 8.0, 9), common::ramp_depth(n, n), "r").unwrap();
    let mut cfg = OpticalConfig::default();
    cfg.tilt.rms_px = Some(0.0);
    let engine = Engine::new(&cfg).unwrap();

    let grid = engine.optics().build_psf_grid(n, n, 5.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let a = spatially_varying_blur(&scene.image, &grid, &ModulationMap::constant(n, n, 0.0).unwrap()).unwrap() == scene.image;

    let s = engine.degrade(&scene, SampleParams { d_over_r0: 4.0, seed: 2 }).unwrap();
    let b = s.turb == s.blur && s.tilt == scene.image;

    let s = engine.degrade(&scene, SampleParams { d_over_r0: 0.0, seed: 3 }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = pipeline::metadata_for(&cfg, &s, "r").unwrap();
    pipeline::write_sample(dir.path(), &scene.image, &s, meta, PersistOptions::default()).unwrap();
    let turb = io::read_image(dir.path().join("turb.png")).unwrap();
    let tilt = io::read_image(dir.path().join("tilt.png")).unwrap();
    let err = |img: &Image| img.data().iter().zip(scene.image.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    let c_err = err(&turb).max(err(&tilt));
    let c = c_err <= 1.0 / 255.0;
    check(
        a && b && c,
        format!(
            "(a) M=0 blur bitwise identity: {}; (b) zero displacement turb=blur, tilt=clean bitwise: {}; (c) D/r0=0, rms=0 max PNG error {:.5} (<= 1/255): {}",
            a, b, c_err, c
        ),
    )
}

fn flat_field_reduction() -> Outcome {
    let src = tempfile::tempdir().unwrap();
    let img = src.path().join("far.png");
    let depth = src.path().join("far_depth.png");
    io::write_image(&img, &turbsynth::synthetic::smooth_texture(128, 128, 6.0, 5)).unwrap();
    io::write_depth(&depth, &DepthMap::constant(128, 128, 1.0).unwrap()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_turbsynth"))
        .args(["degrade", "--image"])
        .arg(&img)
        .arg("--depth")
        .arg(&depth)
        .arg("--out")
        .arg(out.path())
        .args(["--flat-field", "--seed", "11", "--d-over-r0", "4.0"])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    if !status.success() {
        return Err(format!("degrade exited with {}", status));
    }
    let files = ["turb.png", "tilt.png", "flow_bwd.d2fl", "flow_fwd.d2fl", "modulation.png"];
    let same: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(out.path().join(f)).unwrap() == std::fs::read(out.path().join("flat_field").join(f)).unwrap())
        .collect();
    check(same.len() == files.len(), format!("byte-identical to --flat-field: {}/{} files", same.len(), files.len()))
}

fn flow_inversion() -> Outcome {
    let n = 256;
    let params = TiltSpectrumParams::new(OpticalConfig::default().tilt.corr_length_px, 2.0);
    let mut worst_median = 0.0f64;
    let mut worst_psnr = f64::INFINITY;
    for (i, img) in common::smooth_images(10, n).iter().enumerate() {
        let delta = synthesize_raw_field(n, n, &params, &mut ChaCha8Rng::seed_from_u64(500 + i as u64)).unwrap();
        let filled = forward_splat_invert(&delta).unwrap();
        let valid = splat_invert_unfilled(&delta).unwrap().valid;
        let bwd = BackwardFlow { field: filled.field, valid };
        let mut r = fixed_point_residuals(&delta, &bwd, true);
        worst_median = worst_median.max(median(&mut r));
        let back = backward_warp(&backward_warp(img, &delta).unwrap(), &bwd.field).unwrap();
        worst_psnr = worst_psnr.min(psnr(&back, img).unwrap());
    }
    check(
        worst_median < 0.05 && worst_psnr > 35.0,
        format!(
            "10 fields at 2 px rms: worst median residual {:.4} px (< 0.05); worst round-trip PSNR {:.2} dB (> 35)",
            worst_median, worst_psnr
        ),
    )
}

fn taxonomy() -> Outcome {
    let mut mismatches = 0;
    for i in 0..=600 {
        let d = i as f64 / 100.0;
        let expected = if d < 2.25 {
            StrengthCategory::Weak
        } else if d <= 3.75 {
            StrengthCategory::Medium
        } else {
            StrengthCategory::Strong
        };
        mismatches += (categorize_strength(d).unwrap() != expected) as usize;
    }
    let endpoints = categorize_strength(2.25).unwrap() == StrengthCategory::Medium
        && categorize_strength(3.75).unwrap() == StrengthCategory::Medium
        && categorize_strength(2.25 - 1e-12).unwrap() == StrengthCategory::Weak
        && categorize_strength(3.75 + 1e-12).unwrap() == StrengthCategory::Strong;
    check(
        mismatches == 0 && endpoints,
        format!("{} mismatches over 0..6 step 0.01; closed endpoints 2.25/3.75 -> medium: {}", mismatches, endpoints),
    )
}

fn determinism() -> Outcome {
    let scenes: Vec<SceneSource> = (0..8)
        .map(|i| SceneSource::Memory(turbsynth::synthetic::scene(256, 256, i).unwrap()))
        .collect();
    let mut cfg = OpticalConfig::default();
    cfg.dataset.samples = 64;
    cfg.dataset.global_seed = 99;
    let mut digests = Vec::new();
    let mut times = Vec::new();
    for workers in [1, 8, 1, 8] {
        let dir = tempfile::tempdir().unwrap();
        let t = Instant::now();
        generate_dataset(&cfg, &scenes, dir.path(), &GenerateOptions { workers }).unwrap();
        times.push(secs(t.elapsed()));
        digests.push(dataset_digest(dir.path()).unwrap());
    }
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let identical = digests.windows(2).all(|w| w[0] == w[1]);
    let slowest = times.iter().cloned().fold(0.0, f64::max);
    check(
        identical && slowest < 300.0,
        format!(
            "8 scenes x 8 samples at 256x256, workers 1/8/1/8: identical digests {} ({}...); slowest run {:.1} s on {} core(s) (< 300 s)",
            identical,
            &digests[0][..12],
            slowest,
            cores
        ),
    )
}

fn golden_files() -> Outcome {
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let read = |p: &Path| std::fs::read(p).unwrap_or_default();
    let flow = io::encode_flow(&reference::layout_flow()).unwrap() == read(&golden.join(reference::LAYOUT_FLOW_FILE));
    let meta = reference::layout_metadata().to_json().unwrap().into_bytes() == read(&golden.join(reference::LAYOUT_META_FILE));
    let fresh = tempfile::tempdir().unwrap();
    reference::write_all(fresh.path()).unwrap();
    let data = dataset_digest(&fresh.path().join(reference::DATASET_DIR)).unwrap()
        == dataset_digest(&golden.join(reference::DATASET_DIR)).unwrap();
    check(
        flow && meta && data,
        format!("D2FL layout: {}; meta.json layout: {}; reference dataset tree: {}", flow, meta, data),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("modulation numerics", modulation_numerics),
        ("power-law statistics", power_law_statistics),
        ("tilt spectral slope", spectral_slope),
        ("PSF validity", psf_validity),
        ("degenerate reductions", degenerate_reductions),
        ("flat-field reduction", flat_field_reduction),
        ("flow inversion fixed point", flow_inversion),
        ("strength taxonomy", taxonomy),
        ("determinism", determinism),
        ("format golden files", golden_files),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{} {} [{:.1} s]: {}", tag, name, secs(t.elapsed()), detail);
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
