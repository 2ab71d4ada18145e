//! Dense raster containers shared by every stage: multi-channel images in
//! `[0, 1]`, scalar maps, and two-channel pixel-unit vector fields.

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with `f32` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(
                format!("{}x{}x{} = {} samples", width, height, channels, width * height * channels),
                data.len(),
            ));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// ITU-R BT.601 luma of an RGB image, or a copy of a single-channel one.
    pub fn luma(&self) -> Image {
        match self.channels {
            1 => self.clone(),
            3 => Image::from_fn(self.width, self.height, 1, |x, y, _| {
                let p = self.pixel(x, y);
                (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) as f32
            }),
            _ => Image::from_fn(self.width, self.height, 1, |x, y, _| {
                let p = self.pixel(x, y);
                p.iter().sum::<f32>() / p.len() as f32
            }),
        }
    }
}

/// Single-channel `f64` map (depth, distance, modulation).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarMap {
    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(format!("{}x{}", width, height), values.len()));
        }
        Ok(ScalarMap {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        ScalarMap {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        ScalarMap {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarMap {
        ScalarMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_image(&self) -> Image {
        Image::from_fn(self.width, self.height, 1, |x, y, _| self.get(x, y) as f32)
    }
}

/// Two-channel pixel-unit vector field. Channel 0 is horizontal (+x right),
/// channel 1 vertical (+y down); storage is pixel-interleaved `(dx, dy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            data: vec![0.0; width * height * 2],
        }
    }

    pub fn constant(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        Self::from_fn(width, height, |_, _| (dx, dy))
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 2 {
            return Err(Error::shape(format!("{}x{}x2", width, height), data.len()));
        }
        Ok(FlowField {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut data = Vec::with_capacity(width * height * 2);
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = f(x, y);
                data.push(dx);
                data.push(dy);
            }
        }
        FlowField {
            width,
            height,
            data,
        }
    }

    /// Interleaves two per-axis planes.
    pub fn from_planes(width: usize, height: usize, xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != width * height || ys.len() != width * height {
            return Err(Error::shape(width * height, xs.len().max(ys.len())));
        }
        let data = xs
            .iter()
            .zip(ys)
            .flat_map(|(&a, &b)| [a as f32, b as f32])
            .collect();
        Ok(FlowField {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = (y * self.width + x) * 2;
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: (f32, f32)) {
        let i = (y * self.width + x) * 2;
        self.data[i] = v.0;
        self.data[i + 1] = v.1;
    }

    /// Index of the first non-finite vector, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| ((i / 2) % self.width, (i / 2) / self.width))
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    /// Elementwise `a * v`.
    pub fn scaled(&self, a: f32) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    /// Bilinear sample of the field at a fractional position, clamped to the
    /// border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> (f64, f64) {
        let (x0, x1, fx) = clamp_taps(x, self.width);
        let (y0, y1, fy) = clamp_taps(y, self.height);
        let mut out = [0.0f64; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let at = |xx: usize, yy: usize| self.data[(yy * self.width + xx) * 2 + c] as f64;
            let top = (1.0 - fx) * at(x0, y0) + fx * at(x1, y0);
            let bot = (1.0 - fx) * at(x0, y1) + fx * at(x1, y1);
            *o = (1.0 - fy) * top + fy * bot;
        }
        (out[0], out[1])
    }

    /// Root-mean-square of each axis.
    pub fn rms(&self) -> (f64, f64) {
        let n = (self.width * self.height).max(1) as f64;
        let (sx, sy) = self.data.chunks_exact(2).fold((0.0, 0.0), |(sx, sy), v| {
            (sx + (v[0] as f64).powi(2), sy + (v[1] as f64).powi(2))
        });
        ((sx / n).sqrt(), (sy / n).sqrt())
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = (self.width * self.height).max(1) as f64;
        let (sx, sy) = self
            .data
            .chunks_exact(2)
            .fold((0.0, 0.0), |(sx, sy), v| (sx + v[0] as f64, sy + v[1] as f64));
        (sx / n, sy / n)
    }

    /// Plane of one channel as `f64`.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.chunks_exact(2).map(|v| v[c] as f64).collect()
    }
}

/// Left/right integer taps and the fractional weight for a coordinate clamped
/// to `[0, n - 1]`.
#[inline]
pub(crate) fn clamp_taps(p: f64, n: usize) -> (usize, usize, f64) {
    let max = (n - 1) as f64;
    let p = p.clamp(0.0, max);
    let i0 = p.floor();
    let f = p - i0;
    let i0 = i0 as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, f)
}
