use proptest::prelude::*;
use turbsynth::config::{StrengthSampling, TiltModel};
use turbsynth::depth::ZMaxMode;
use turbsynth::error::{ConfigError, FlowFormatError, ImageFormatError};
use turbsynth::io;
use turbsynth::raster::{FlowField, Image};
use turbsynth::{Error, OpticalConfig};

fn write_png(path: &std::path::Path, w: u32, h: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) {
    let file = std::fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w, h);
    enc.set_color(color);
    enc.set_depth(depth);
    enc.write_header().unwrap().write_image_data(data).unwrap();
}

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<f32>().prop_filter("finite", |v| v.is_finite())
}

proptest! {
    #[test]
    fn flow_round_trip_is_bitwise(w in 1usize..12, h in 1usize..12, seed in proptest::collection::vec(finite_f32(), 288)) {
        let data: Vec<f32> = seed.into_iter().take(w * h * 2).collect();
        let field = FlowField::from_vec(w, h, data).unwrap();
        let bytes = io::encode_flow(&field).unwrap();
        prop_assert_eq!(bytes.len(), 20 + w * h * 8);
        let back = io::decode_flow(&bytes).unwrap();
        let a: Vec<u32> = field.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn config_round_trips_through_toml(
        l in 1.0f64..1e5,
        s in 0.001f64..0.999,
        lo in 0.0f64..4.0,
        span in 0.0f64..4.0,
        stratified: bool,
        modes in 3usize..60,
        pupil in 32usize..300,
        half_k in 0usize..16,
        rows in 2usize..12,
        cols in 2usize..12,
        corr in 0.0f64..10.0,
        tilt_corr in 1.0f64..2000.0,
        inner in 0.0f64..5.0,
        gradient: bool,
        rms in proptest::option::of(0.0f64..5.0),
        samples in 1usize..100_000,
        global_seed: u64,
        flags in proptest::array::uniform3(any::<bool>()),
        scene_mode: bool,
    ) {
        let mut c = OpticalConfig::default();
        c.geometry.path_length = l;
        c.geometry.baseline_offset = s;
        c.geometry.z_max_mode = if scene_mode { ZMaxMode::Scene } else { ZMaxMode::Path };
        c.turbulence.d_over_r0 = [lo, lo + span];
        c.turbulence.sampling = if stratified { StrengthSampling::Stratified } else { StrengthSampling::Uniform };
        c.zernike.modes = modes;
        c.zernike.pupil_resolution = pupil;
        c.zernike.kernel_size = 2 * half_k + 1;
        c.zernike.grid = [rows, cols];
        c.zernike.correlation_length = corr;
        c.tilt.corr_length_px = tilt_corr;
        c.tilt.inner_scale_px = inner;
        c.tilt.model = if gradient { TiltModel::PhaseGradient } else { TiltModel::IndependentAxes };
        c.tilt.rms_px = rms;
        c.dataset.samples = samples;
        c.dataset.global_seed = global_seed;
        c.dataset.flat_field_mode = flags[0];
        c.dataset.persist_blur = flags[1];
        c.dataset.debug_outputs = flags[2];
        let c = c.resolved();
        c.validate().unwrap();
        let text = io::config_to_toml(&c).unwrap();
        prop_assert_eq!(io::parse_config_str(&text).unwrap(), c);
    }
}

#[test]
fn empty_config_is_the_default() {
    assert_eq!(io::parse_config_str("").unwrap(), OpticalConfig::default());
}

#[test]
fn out_of_range_baseline_names_the_field() {
    let e = io::parse_config_str("[geometry]\ns = 1.5\n").unwrap_err();
    match e {
        Error::Config(ConfigError::Invalid { field, message }) => {
            assert_eq!(field, "geometry.s");
            assert!(message.contains("(0,1)"), "{}", message);
        }
        other => panic!("unexpected {:?}", other),
    }
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let e = io::parse_config_str("[tilt]\nrms = 2.0\n").unwrap_err().to_string();
    assert!(e.contains("rms") && e.contains("line 2"), "{}", e);
}

#[test]
fn flow_files_reject_bad_headers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.d2fl");
    io::write_flow(&p, &FlowField::constant(3, 2, 0.5, -1.0)).unwrap();
    let good = std::fs::read(&p).unwrap();
    assert_eq!(good.len(), 68);

    let mut cut = good.clone();
    cut.truncate(60);
    std::fs::write(&p, &cut).unwrap();
    match io::read_flow(&p) {
        Err(Error::Flow(FlowFormatError::Truncated { expected, actual })) => assert_eq!((expected, actual), (68, 60)),
        other => panic!("unexpected {:?}", other),
    }

    let mut magic = good.clone();
    magic[0] = b'X';
    std::fs::write(&p, &magic).unwrap();
    assert!(matches!(io::read_flow(&p), Err(Error::Flow(FlowFormatError::BadMagic { .. }))));

    let mut version = good;
    version[4] = 2;
    std::fs::write(&p, &version).unwrap();
    assert!(matches!(io::read_flow(&p), Err(Error::Flow(FlowFormatError::BadVersion { found: 2 }))));
}

#[test]
fn eight_bit_png_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("a.png");
    let data: Vec<u8> = (0..7 * 5 * 3).map(|i| (i * 37 % 256) as u8).collect();
    write_png(&src, 7, 5, png::ColorType::Rgb, png::BitDepth::Eight, &data);
    let img = io::read_image(&src).unwrap();
    let dst = dir.path().join("b.png");
    io::write_image(&dst, &img).unwrap();
    let again = io::read_image(&dst).unwrap();
    assert_eq!(img, again);
    let raw: Vec<u8> = again.data().iter().map(|&v| io::quantize(v, 255) as u8).collect();
    assert_eq!(raw, data);
}

#[test]
fn sixteen_bit_depth_normalizes_by_full_scale() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.png");
    let data: Vec<u8> = [65535u16, 0, 32768, 1].iter().flat_map(|v| v.to_be_bytes()).collect();
    write_png(&p, 2, 2, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data);
    let d = io::read_depth(&p).unwrap();
    assert_eq!(d.as_map().get(0, 0), 1.0);
    assert_eq!(d.as_map().get(1, 0), 0.0);
}

#[test]
fn half_encodes_to_128() {
    assert_eq!(io::quantize(0.5, 255), 128);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.png");
    io::write_image(&p, &Image::filled(2, 2, 3, 0.5)).unwrap();
    let v = io::read_image(&p).unwrap().get(0, 0, 0);
    assert_eq!(v, 128.0 / 255.0);
}

#[test]
fn unsupported_png_layouts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rgba.png");
    write_png(&p, 1, 1, png::ColorType::Rgba, png::BitDepth::Eight, &[1, 2, 3, 4]);
    assert!(matches!(io::read_image(&p), Err(Error::Image(ImageFormatError::Unsupported { .. }))));
    let p = dir.path().join("four.png");
    write_png(&p, 2, 1, png::ColorType::Grayscale, png::BitDepth::Four, &[0x12]);
    assert!(matches!(io::read_depth(&p), Err(Error::Image(ImageFormatError::Unsupported { bits: 4, .. }))));
}

#[test]
fn metadata_round_trips_and_checks_category() {
    let meta = turbsynth::reference::layout_metadata();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("meta.json");
    std::fs::write(&p, meta.to_json().unwrap()).unwrap();
    let back = io::read_metadata(&p).unwrap();
    assert_eq!(back, meta);
    back.check_consistency().unwrap();
    let mut bad = back;
    bad.d_over_r0 = 3.76;
    assert!(bad.check_consistency().is_err());
}
