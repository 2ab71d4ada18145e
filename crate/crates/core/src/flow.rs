//! Inversion of a forward displacement field into backward supervision flow.
//!
//! Every source pixel `x` carries `-Delta(x)` to its landing point
//! `x + Delta(x)` and spreads it over the four surrounding pixels with
//! bilinear weights. Accumulated values are normalized by accumulated weight;
//! targets whose weight stays below [`COVERAGE_EPSILON`] are holes and get
//! filled from their neighbours.
//!
//! Accumulation runs over fixed bands of source rows with one buffer per band,
//! merged in band order, so results do not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::FlowField;

/// Minimum accumulated splat weight for a pixel to count as covered.
pub const COVERAGE_EPSILON: f64 = 1e-4;

/// Relaxation sweeps after every hole has a value.
pub const MAX_FILL_ITERATIONS: usize = 64;

const BAND_ROWS: usize = 16;

/// Backward flow plus the pre-fill coverage mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardFlow {
    pub field: FlowField,
    /// `true` where splatting covered the pixel.
    pub valid: Vec<bool>,
}

impl BackwardFlow {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
    pub fn dims(&self) -> (usize, usize) {
        self.field.dims()
    }
}

/// Raw splat accumulators.
#[derive(Clone, Debug)]
pub struct SplatAccumulation {
    pub width: usize,
    pub height: usize,
    /// Per-pixel accumulated bilinear weight.
    pub weight: Vec<f64>,
    /// Per-pixel weighted sum of `-Delta`, interleaved `(x, y)`.
    pub value: Vec<f64>,
    /// Weight that landed outside the image.
    pub spilled_weight: f64,
}

impl SplatAccumulation {
    pub fn total_weight(&self) -> f64 {
        self.weight.iter().sum::<f64>() + self.spilled_weight
    }
}

struct Band {
    row0: isize,
    rows: usize,
    weight: Vec<f64>,
    value: Vec<f64>,
    spilled: f64,
}

fn splat_band(delta: &FlowField, y_start: usize, y_end: usize) -> Band {
    let (w, h) = delta.dims();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in y_start..y_end {
        for x in 0..w {
            let ty = y as f64 + delta.get(x, y).1 as f64;
            lo = lo.min(ty);
            hi = hi.max(ty);
        }
    }
    let row0 = (lo.floor() as isize).clamp(0, h as isize - 1);
    let row1 = ((hi.floor() as isize) + 1).clamp(0, h as isize - 1);
    let rows = (row1 - row0 + 1) as usize;
    let mut band = Band {
        row0,
        rows,
        weight: vec![0.0; rows * w],
        value: vec![0.0; rows * w * 2],
        spilled: 0.0,
    };
    for y in y_start..y_end {
        for x in 0..w {
            let (dx, dy) = delta.get(x, y);
            let (dx, dy) = (dx as f64, dy as f64);
            let tx = x as f64 + dx;
            let ty = y as f64 + dy;
            let x0 = tx.floor();
            let y0 = ty.floor();
            let fx = tx - x0;
            let fy = ty - y0;
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            for (px, py, wt) in taps {
                if wt == 0.0 {
                    continue;
                }
                if px < 0.0 || py < 0.0 || px >= w as f64 || py >= h as f64 {
                    band.spilled += wt;
                    continue;
                }
                let r = py as isize - band.row0;
                let i = r as usize * w + px as usize;
                band.weight[i] += wt;
                band.value[2 * i] -= wt * dx;
                band.value[2 * i + 1] -= wt * dy;
            }
        }
    }
    band
}

/// Bilinear forward splat of `-Delta` onto the landing points `x + Delta(x)`.
pub fn splat(delta: &FlowField) -> Result<SplatAccumulation> {
    if let Some((x, y)) = delta.first_non_finite() {
        return Err(Error::InvalidInput(format!(
            "non-finite displacement at pixel ({}, {})",
            x, y
        )));
    }
    let (w, h) = delta.dims();
    let starts: Vec<usize> = (0..h).step_by(BAND_ROWS).collect();
    let bands: Vec<Band> = starts
        .par_iter()
        .map(|&s| splat_band(delta, s, (s + BAND_ROWS).min(h)))
        .collect();
    let mut acc = SplatAccumulation {
        width: w,
        height: h,
        weight: vec![0.0; w * h],
        value: vec![0.0; w * h * 2],
        spilled_weight: 0.0,
    };
    for band in bands {
        let base = band.row0 as usize * w;
        for i in 0..band.rows * w {
            acc.weight[base + i] += band.weight[i];
            acc.value[2 * (base + i)] += band.value[2 * i];
            acc.value[2 * (base + i) + 1] += band.value[2 * i + 1];
        }
        acc.spilled_weight += band.spilled;
    }
    Ok(acc)
}

/// Normalized splat without hole filling; holes hold zero and are invalid.
pub fn splat_invert_unfilled(delta: &FlowField) -> Result<BackwardFlow> {
    let acc = splat(delta)?;
    let (w, h) = delta.dims();
    let mut field = FlowField::zeros(w, h);
    let mut valid = vec![false; w * h];
    for (i, ok) in valid.iter_mut().enumerate() {
        let wt = acc.weight[i];
        if wt >= COVERAGE_EPSILON {
            *ok = true;
            let d = field.data_mut();
            d[2 * i] = (acc.value[2 * i] / wt) as f32;
            d[2 * i + 1] = (acc.value[2 * i + 1] / wt) as f32;
        }
    }
    Ok(BackwardFlow { field, valid })
}

/// Backward flow `V` with `Delta(x) + V(x + Delta(x)) ~ 0`, holes filled.
pub fn forward_splat_invert(delta: &FlowField) -> Result<BackwardFlow> {
    fill_holes(splat_invert_unfilled(delta)?)
}

fn neighbours(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

/// Fills invalid pixels: an outward sweep assigns each hole the mean of its
/// already-known neighbours, then up to [`MAX_FILL_ITERATIONS`] Jacobi sweeps
/// relax the holes towards the harmonic interpolant of the valid boundary.
/// Valid pixels are never modified.
pub fn fill_holes(flow: BackwardFlow) -> Result<BackwardFlow> {
    let (w, h) = flow.field.dims();
    if flow.valid.len() != w * h {
        return Err(Error::shape(w * h, flow.valid.len()));
    }
    let holes: Vec<usize> = (0..w * h).filter(|&i| !flow.valid[i]).collect();
    if holes.is_empty() {
        return Ok(flow);
    }
    if holes.len() == w * h {
        return Err(Error::Unfillable);
    }
    let mut vals: Vec<[f64; 2]> = flow
        .field
        .data()
        .chunks_exact(2)
        .map(|v| [v[0] as f64, v[1] as f64])
        .collect();
    let mut known = flow.valid.clone();
    let mut pending = holes.clone();
    while !pending.is_empty() {
        let updates: Vec<(usize, [f64; 2])> = pending
            .iter()
            .filter_map(|&i| {
                let (mut s, mut n) = ([0.0, 0.0], 0usize);
                for j in neighbours(i, w, h).filter(|&j| known[j]) {
                    s[0] += vals[j][0];
                    s[1] += vals[j][1];
                    n += 1;
                }
                (n > 0).then(|| (i, [s[0] / n as f64, s[1] / n as f64]))
            })
            .collect();
        for &(i, v) in &updates {
            vals[i] = v;
            known[i] = true;
        }
        pending.retain(|&i| !known[i]);
    }
    for _ in 0..MAX_FILL_ITERATIONS {
        let updates: Vec<[f64; 2]> = holes
            .iter()
            .map(|&i| {
                let (mut s, mut n) = ([0.0, 0.0], 0usize);
                for j in neighbours(i, w, h) {
                    s[0] += vals[j][0];
                    s[1] += vals[j][1];
                    n += 1;
                }
                [s[0] / n as f64, s[1] / n as f64]
            })
            .collect();
        let mut change = 0.0f64;
        for (&i, v) in holes.iter().zip(updates) {
            change = change.max((vals[i][0] - v[0]).abs()).max((vals[i][1] - v[1]).abs());
            vals[i] = v;
        }
        if change < 1e-6 {
            break;
        }
    }
    let mut field = flow.field;
    for &i in &holes {
        let d = field.data_mut();
        d[2 * i] = vals[i][0] as f32;
        d[2 * i + 1] = vals[i][1] as f32;
    }
    Ok(BackwardFlow {
        field,
        valid: flow.valid,
    })
}

/// `|Delta(x) + V(x + Delta(x))|` at every source pixel whose landing point
/// is inside the image and, when `valid_only`, on a covered pixel.
pub fn fixed_point_residuals(delta: &FlowField, bwd: &BackwardFlow, valid_only: bool) -> Vec<f64> {
    let (w, h) = delta.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = delta.get(x, y);
            let tx = x as f64 + dx as f64;
            let ty = y as f64 + dy as f64;
            if tx < 0.0 || ty < 0.0 || tx > (w - 1) as f64 || ty > (h - 1) as f64 {
                continue;
            }
            if valid_only {
                let nx = tx.round() as usize;
                let ny = ty.round() as usize;
                if !bwd.valid[ny * w + nx] {
                    continue;
                }
            }
            let (vx, vy) = bwd.field.sample_bilinear(tx, ty);
            out.push(((dx as f64 + vx).powi(2) + (dy as f64 + vy).powi(2)).sqrt());
        }
    }
    out
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
