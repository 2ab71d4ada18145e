//! On-disk formats: D2FL flow files, PNG images and depth maps, canonical
//! JSON metadata, and the TOML generator configuration.
//!
//! D2FL layout (all little-endian):
//!
//! | offset | size        | content                                   |
//! |--------|-------------|-------------------------------------------|
//! | 0      | 4           | magic `D2FL`                              |
//! | 4      | 4           | version, u32 = 1                          |
//! | 8      | 4           | height, u32                               |
//! | 12     | 4           | width, u32                                |
//! | 16     | 4           | channels, u32 = 2                         |
//! | 20     | `H*W*2*4`   | row-major `(dx, dy)` pairs as f32         |

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::OpticalConfig;
use crate::depth::{DepthMap, ModulationMap};
use crate::error::{ConfigError, Error, FlowFormatError, ImageFormatError, Result};
use crate::pipeline::StrengthCategory;
use crate::raster::{FlowField, Image, ScalarMap};

pub const FLOW_MAGIC: [u8; 4] = *b"D2FL";
pub const FLOW_VERSION: u32 = 1;
pub const FLOW_HEADER_BYTES: usize = 20;
/// Version of the meta.json schema.
pub const META_VERSION: u32 = 1;
/// Version of the manifest.json schema.
pub const MANIFEST_VERSION: u32 = 1;

pub const ENGINE_VERSION: &str = concat!("turbsynth ", env!("CARGO_PKG_VERSION"));

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serializes a flow field into D2FL bytes.
pub fn encode_flow(field: &FlowField) -> Result<Vec<u8>> {
    if let Some((x, y)) = field.first_non_finite() {
        return Err(FlowFormatError::NonFinite { x, y }.into());
    }
    let (w, h) = field.dims();
    let mut out = Vec::with_capacity(FLOW_HEADER_BYTES + w * h * 8);
    out.extend_from_slice(&FLOW_MAGIC);
    for v in [FLOW_VERSION, h as u32, w as u32, 2] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses D2FL bytes with strict header checks.
pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < FLOW_HEADER_BYTES {
        if bytes.len() >= 4 && bytes[..4] != FLOW_MAGIC {
            return Err(FlowFormatError::BadMagic {
                found: bytes[..4].try_into().unwrap(),
            }
            .into());
        }
        return Err(FlowFormatError::Truncated {
            expected: FLOW_HEADER_BYTES as u64,
            actual: bytes.len() as u64,
        }
        .into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != FLOW_MAGIC {
        return Err(FlowFormatError::BadMagic { found: magic }.into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let version = word(1);
    if version != FLOW_VERSION {
        return Err(FlowFormatError::BadVersion { found: version }.into());
    }
    let (h, w, channels) = (word(2) as usize, word(3) as usize, word(4));
    if channels != 2 {
        return Err(FlowFormatError::BadChannels { found: channels }.into());
    }
    let expected = FLOW_HEADER_BYTES as u64 + (h as u64) * (w as u64) * 8;
    if bytes.len() as u64 != expected {
        return Err(FlowFormatError::Truncated {
            expected,
            actual: bytes.len() as u64,
        }
        .into());
    }
    let data: Vec<f32> = bytes[FLOW_HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = FlowField::from_vec(w, h, data)?;
    if let Some((x, y)) = field.first_non_finite() {
        return Err(FlowFormatError::NonFinite { x, y }.into());
    }
    Ok(field)
}

pub fn write_flow(path: impl AsRef<Path>, field: &FlowField) -> Result<()> {
    write_file(path.as_ref(), &encode_flow(field)?)
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    decode_flow(&read_file(path.as_ref())?)
}

/// Raw decoded PNG: samples normalized to `[0, 1]`.
struct Decoded {
    width: usize,
    height: usize,
    color: png::ColorType,
    bits: u8,
    samples: Vec<f32>,
}

fn decode_png(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageFormatError::Decode(format!("{}: {}", path.display(), e)))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageFormatError::Decode("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageFormatError::Decode(format!("{}: {}", path.display(), e)))?;
    buf.truncate(info.buffer_size());
    let bits = match info.bit_depth {
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => 16,
        other => {
            return Err(ImageFormatError::Unsupported {
                color: format!("{:?}", info.color_type),
                bits: other as u8,
                expected: "8- or 16-bit samples",
            }
            .into())
        }
    };
    let samples = if bits == 8 {
        buf.iter().map(|&v| v as f32 / 255.0).collect()
    } else {
        buf.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect()
    };
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        bits,
        samples,
    })
}

/// Reads an RGB (3 channels) or grayscale (1 channel) PNG, 8 or 16 bits.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let d = decode_png(path.as_ref())?;
    let channels = match d.color {
        png::ColorType::Rgb => 3,
        png::ColorType::Grayscale => 1,
        other => {
            return Err(ImageFormatError::Unsupported {
                color: format!("{:?}", other),
                bits: d.bits,
                expected: "RGB or grayscale",
            }
            .into())
        }
    };
    Image::from_vec(d.width, d.height, channels, d.samples)
}

/// Reads a clean RGB image. Grayscale input is replicated to three channels.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<Image> {
    let img = read_image(path)?;
    if img.channels() == 3 {
        return Ok(img);
    }
    Image::from_vec(
        img.width(),
        img.height(),
        3,
        img.data().iter().flat_map(|&v| [v, v, v]).collect(),
    )
}

/// Reads an 8- or 16-bit grayscale depth map, normalized by the bit-depth
/// maximum.
pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let d = decode_png(path.as_ref())?;
    if d.color != png::ColorType::Grayscale {
        return Err(ImageFormatError::Unsupported {
            color: format!("{:?}", d.color),
            bits: d.bits,
            expected: "grayscale depth",
        }
        .into());
    }
    let map = ScalarMap::from_vec(d.width, d.height, d.samples.iter().map(|&v| v as f64).collect())?;
    DepthMap::new(map)
}

/// Quantizes `v` in `[0, 1]` to `0..=max`, rounding half away from zero.
pub fn quantize(v: f32, max: u16) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * max as f64).round() as u16
}

fn encode_png(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(|e| ImageFormatError::Encode(e.to_string()))?;
        writer
            .write_image_data(data)
            .map_err(|e| ImageFormatError::Encode(e.to_string()))?;
        writer.finish().map_err(|e| ImageFormatError::Encode(e.to_string()))?;
    }
    Ok(out)
}

/// PNG bytes of a 1- or 3-channel image at 8 bits.
pub fn encode_image(image: &Image) -> Result<Vec<u8>> {
    let color = match image.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(ImageFormatError::Unsupported {
                color: format!("{} channels", c),
                bits: 8,
                expected: "1 or 3 channels",
            }
            .into())
        }
    };
    if !image.is_finite() {
        return Err(Error::InvalidInput("cannot encode non-finite image".into()));
    }
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v, 255) as u8).collect();
    encode_png(image.width(), image.height(), color, png::BitDepth::Eight, &bytes)
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    write_file(path.as_ref(), &encode_image(image)?)
}

/// PNG bytes of a scalar map in `[0, 1]` as 16-bit grayscale.
pub fn encode_gray16(map: &ScalarMap) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = map
        .values()
        .iter()
        .flat_map(|&v| quantize(v as f32, 65535).to_be_bytes())
        .collect();
    encode_png(map.width(), map.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

pub fn write_modulation(path: impl AsRef<Path>, m: &ModulationMap) -> Result<()> {
    write_file(path.as_ref(), &encode_gray16(m.as_map())?)
}

/// 16-bit grayscale depth PNG.
pub fn write_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    write_file(path.as_ref(), &encode_gray16(depth.as_map())?)
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest over per-file digests: SHA-256 of `name:hex\n` lines in name order.
pub fn combined_digest<'a>(files: impl IntoIterator<Item = (&'a String, &'a String)>) -> String {
    let mut lines: Vec<String> = files.into_iter().map(|(n, d)| format!("{}:{}\n", n, d)).collect();
    lines.sort();
    sha256_hex(lines.concat().as_bytes())
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_u64() {
                out.push_str(&i.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &m[k.as_str()], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Canonical JSON: sorted keys, two-space indent, integers verbatim, floats
/// in 17-significant-digit exponent form, trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Metadata(e.to_string()))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

/// Per-sample metadata stored as `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataRecord {
    pub format_version: u32,
    pub sample_id: String,
    pub source_id: String,
    pub seed: u64,
    pub d_over_r0: f64,
    pub category: StrengthCategory,
    #[serde(rename = "L")]
    pub path_length: f64,
    #[serde(rename = "s")]
    pub baseline_offset: f64,
    pub z_max: f64,
    pub tilt_rms_px: f64,
    pub kernel_size: usize,
    /// `[rows, cols]`.
    pub psf_grid: [usize; 2],
    pub flat_field_mode: bool,
    pub width: usize,
    pub height: usize,
    pub engine_version: String,
    /// SHA-256 of every other file in the sample directory.
    pub files: std::collections::BTreeMap<String, String>,
    /// [`combined_digest`] of `files`.
    pub content_digest: String,
}

impl MetadataRecord {
    /// Checks the category against `d_over_r0` and the digest against `files`.
    pub fn check_consistency(&self) -> Result<()> {
        let expected = StrengthCategory::of(self.d_over_r0)?;
        if expected != self.category {
            return Err(Error::Metadata(format!(
                "{}: category {} inconsistent with D/r0 = {} ({})",
                self.sample_id, self.category, self.d_over_r0, expected
            )));
        }
        if combined_digest(&self.files) != self.content_digest {
            return Err(Error::Metadata(format!("{}: content_digest does not match files", self.sample_id)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        canonical_json(self)
    }
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<MetadataRecord> {
    let path = path.as_ref();
    let text = String::from_utf8(read_file(path)?).map_err(|e| Error::Metadata(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::Metadata(format!("{}: {}", path.display(), e)))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a TOML configuration.
pub fn parse_config_str(text: &str) -> Result<OpticalConfig> {
    let cfg: OpticalConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<OpticalConfig> {
    let path = path.as_ref();
    let text = String::from_utf8(read_file(path)?).map_err(|e| ConfigError::Syntax {
        line: 0,
        message: format!("not UTF-8: {}", e),
    })?;
    parse_config_str(&text)
}

pub fn config_to_toml(cfg: &OpticalConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Internal(format!("config serialization: {}", e)))
}

/// Writes `bytes` to `path` through a buffered writer and syncs it.
pub(crate) fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    let file = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    file.sync_all().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_flow_layout() {
        let bytes = encode_flow(&FlowField::zeros(2, 2)).unwrap();
        assert_eq!(bytes.len(), 52);
        assert!(bytes[20..].iter().all(|&b| b == 0));
        let mut f = FlowField::zeros(2, 2);
        f.set(0, 0, (1.5, 0.0));
        assert_eq!(&encode_flow(&f).unwrap()[20..24], &[0x00, 0x00, 0xC0, 0x3F]);
    }

    #[test]
    fn flow_header_errors() {
        let mut bytes = encode_flow(&FlowField::zeros(3, 2)).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match decode_flow(cut) {
            Err(Error::Flow(FlowFormatError::Truncated { expected, actual })) => {
                assert_eq!((expected, actual), (68, 65));
            }
            other => panic!("{:?}", other),
        }
        bytes[0] = b'X';
        assert!(matches!(decode_flow(&bytes), Err(Error::Flow(FlowFormatError::BadMagic { .. }))));
        bytes[0] = b'D';
        bytes[4] = 2;
        assert!(matches!(decode_flow(&bytes), Err(Error::Flow(FlowFormatError::BadVersion { found: 2 }))));
    }

    #[test]
    fn quantization_rounds_half_away() {
        assert_eq!(quantize(0.5, 255), 128);
        assert_eq!(quantize(1.0, 65535), 65535);
        assert_eq!(quantize(-0.1, 255), 0);
    }

    #[test]
    fn canonical_json_sorts_and_formats() {
        let v = serde_json::json!({"b": 0.5, "a": [1, 2], "c": {"z": true, "y": "q"}});
        let s = canonical_json(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": [\n    1,\n    2\n  ],\n  \"b\": 5.0000000000000000e-1,\n  \"c\": {\n    \"y\": \"q\",\n    \"z\": true\n  }\n}\n"
        );
    }

    #[test]
    fn config_errors_have_locations() {
        let e = parse_config_str("[geometry]\nL = 10\nbogus = 3\n").unwrap_err().to_string();
        assert!(e.contains("bogus") && e.contains("line 3"), "{}", e);
        let e = parse_config_str("[geometry]\ns = 1.5\n").unwrap_err().to_string();
        assert!(e.contains("geometry.s") && e.contains("(0,1)"), "{}", e);
        assert_eq!(parse_config_str("").unwrap(), OpticalConfig::default());
    }
}
