//! Row-wise FFT kernels and square transposition.
//!
//! All 2D work is done on row-major `n × n` buffers. Transforms along the
//! second axis act on contiguous rows; the first axis is reached through an
//! in-place transpose. Rows are processed independently, so the output is
//! bitwise identical for any rayon pool size.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse plans for one transform length.
#[derive(Clone)]
pub struct FftPlan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FftPlan").field("n", &self.n).finish()
    }
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch_len,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward DFT of every length-`n` row of `data`.
    pub fn rows_forward(&self, data: &mut [Complex64]) {
        self.rows(data, &self.forward);
    }

    /// Unnormalized inverse DFT of every row.
    pub fn rows_inverse(&self, data: &mut [Complex64]) {
        self.rows(data, &self.inverse);
    }

    pub fn scratch_len(&self) -> usize {
        self.scratch_len
    }

    pub fn forward_with_scratch(&self, row: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(row, scratch);
    }

    pub fn inverse_with_scratch(&self, row: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(row, scratch);
    }

    /// Forward DFT of a single row.
    pub fn forward(&self, row: &mut [Complex64]) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.forward.process_with_scratch(row, &mut scratch);
    }

    /// Inverse (unnormalized) DFT of a single row.
    pub fn inverse(&self, row: &mut [Complex64]) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.inverse.process_with_scratch(row, &mut scratch);
    }

    fn rows(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len() % self.n, 0);
        let zero = Complex64::new(0.0, 0.0);
        data.par_chunks_mut(self.n).for_each_init(
            || vec![zero; self.scratch_len],
            |scratch, row| plan.process_with_scratch(row, scratch),
        );
    }
}

const BLOCK: usize = 32;

/// In-place transpose of a row-major `n × n` buffer.
pub fn transpose_square(data: &mut [Complex64], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    for bi in (0..n).step_by(BLOCK) {
        let i_end = (bi + BLOCK).min(n);
        // diagonal block
        for i in bi..i_end {
            for j in (i + 1)..i_end {
                data.swap(i * n + j, j * n + i);
            }
        }
        for bj in ((bi + BLOCK)..n).step_by(BLOCK) {
            let j_end = (bj + BLOCK).min(n);
            for i in bi..i_end {
                for j in bj..j_end {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Transposed copy `dst[j][i] = src[i][j]` of an `n × n` buffer.
pub fn transpose_into(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    debug_assert_eq!(src.len(), n * n);
    debug_assert_eq!(dst.len(), n * n);
    for bi in (0..n).step_by(BLOCK) {
        let i_end = (bi + BLOCK).min(n);
        for bj in (0..n).step_by(BLOCK) {
            let j_end = (bj + BLOCK).min(n);
            for i in bi..i_end {
                for j in bj..j_end {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Sum of `|z|²` over each row, then the row sums in order. Deterministic.
pub fn sum_norm_sqr(data: &[Complex64], n: usize) -> f64 {
    let rows: Vec<f64> = data
        .par_chunks(n)
        .map(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    rows.iter().sum()
}
