//! Two-dimensional FFT helpers over row-major complex buffers.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned 2-D transform for a fixed `rows x cols` shape. Inverse transforms
/// are unnormalized.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward_sparse_rows(data, self.rows);
    }

    /// Forward transform when only the first `nonzero_rows` rows hold data;
    /// the all-zero rows skip the row pass.
    pub fn forward_sparse_rows(&self, data: &mut [Complex64], nonzero_rows: usize) {
        assert_eq!(data.len(), self.rows * self.cols);
        let n = nonzero_rows.min(self.rows);
        self.row_fwd.process(&mut data[..n * self.cols]);
        self.columns(data, &*self.col_fwd);
    }

    /// Row-direction forward transforms of the first `rows` rows only.
    pub fn forward_rows(&self, data: &mut [Complex64], rows: usize) {
        assert_eq!(data.len(), self.rows * self.cols);
        let n = rows.min(self.rows);
        self.row_fwd.process(&mut data[..n * self.cols]);
    }

    /// Column-direction forward transforms of the listed columns only.
    pub fn forward_columns(&self, data: &mut [Complex64], cols: &[usize]) {
        assert_eq!(data.len(), self.rows * self.cols);
        let mut col = vec![Complex64::new(0.0, 0.0); self.rows];
        for &c in cols {
            for (r, v) in col.iter_mut().enumerate() {
                *v = data[r * self.cols + c];
            }
            self.col_fwd.process(&mut col);
            for (r, v) in col.iter().enumerate() {
                data[r * self.cols + c] = *v;
            }
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.rows * self.cols);
        self.row_inv.process(data);
        self.columns(data, &*self.col_inv);
    }

    fn columns(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let mut col = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for (r, v) in col.iter_mut().enumerate() {
                *v = data[r * self.cols + c];
            }
            fft.process(&mut col);
            for (r, v) in col.iter().enumerate() {
                data[r * self.cols + c] = *v;
            }
        }
    }
}

/// Signed frequency index of bin `k` in an `n`-point transform.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
