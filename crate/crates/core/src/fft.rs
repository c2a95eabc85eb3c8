//! Two-dimensional complex FFT on row-major buffers, built on `rustfft`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse plans for one `width x height` size.
pub struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// In-place unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward_with(data, &mut Vec::new());
    }

    /// In-place inverse transform, normalized by `1 / (width * height)`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse_with(data, &mut Vec::new());
    }

    /// Forward transform reusing `scratch` for the transposed copy.
    pub fn forward_with(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(data, &self.row_fwd, &self.col_fwd, None, scratch);
    }

    /// Forward transform of a buffer whose rows outside `rows` are zero;
    /// those rows skip the row pass.
    pub fn forward_sparse_with(&self, data: &mut [Complex64], rows: &[usize], scratch: &mut Vec<Complex64>) {
        self.run(data, &self.row_fwd, &self.col_fwd, Some(rows), scratch);
    }

    pub fn inverse_with(&self, data: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.run(data, &self.row_inv, &self.col_inv, None, scratch);
        let scale = 1.0 / (self.width * self.height) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(
        &self,
        data: &mut [Complex64],
        row: &Arc<dyn Fft<f64>>,
        col: &Arc<dyn Fft<f64>>,
        rows: Option<&[usize]>,
        scratch: &mut Vec<Complex64>,
    ) {
        assert_eq!(data.len(), self.width * self.height);
        match rows {
            None => row.process(data),
            Some(rows) => {
                let mut s = vec![Complex64::new(0.0, 0.0); row.get_inplace_scratch_len()];
                for &y in rows {
                    row.process_with_scratch(&mut data[y * self.width..(y + 1) * self.width], &mut s);
                }
            }
        }
        scratch.resize(data.len(), Complex64::new(0.0, 0.0));
        transpose_into(data, scratch, self.width, self.height);
        col.process(scratch);
        transpose_into(scratch, data, self.height, self.width);
    }
}

const BLOCK: usize = 32;

fn transpose_into(src: &[Complex64], dst: &mut [Complex64], width: usize, height: usize) {
    for by in (0..height).step_by(BLOCK) {
        for bx in (0..width).step_by(BLOCK) {
            for y in by..(by + BLOCK).min(height) {
                for x in bx..(bx + BLOCK).min(width) {
                    dst[x * height + y] = src[y * width + x];
                }
            }
        }
    }
}

/// Smallest size `>= n` whose prime factors are all in {2, 3, 5, 7}.
pub fn fast_size(n: usize) -> usize {
    let mut k = n.max(1);
    loop {
        let mut r = k;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return k;
        }
        k += 1;
    }
}
