//! Two-dimensional FFT helpers on row-major `Complex64` buffers.
//!
//! Thin wrapper over `rustfft` with a process-wide plan cache. Rows are
//! transformed in parallel with rayon; each row/column transform is
//! independent, so results are bitwise identical for any thread count.

use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("FFT planner lock poisoned");
    match direction {
        FftDirection::Forward => planner.plan_fft_forward(n),
        FftDirection::Inverse => planner.plan_fft_inverse(n),
    }
}

fn transform_rows(data: &mut [Complex64], row_len: usize, fft: &Arc<dyn Fft<f64>>) {
    data.par_chunks_mut(row_len).for_each_init(
        || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

fn transpose(src: &[Complex64], nx: usize, ny: usize, dst: &mut Vec<Complex64>) {
    dst.clear();
    dst.resize(src.len(), Complex64::new(0.0, 0.0));
    for iy in 0..ny {
        for ix in 0..nx {
            dst[ix * ny + iy] = src[iy * nx + ix];
        }
    }
}

fn fft2_direction(data: &mut Vec<Complex64>, nx: usize, ny: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), nx * ny);
    let row_fft = plan(nx, direction);
    transform_rows(data, nx, &row_fft);
    let mut scratch = Vec::new();
    transpose(data, nx, ny, &mut scratch);
    let col_fft = plan(ny, direction);
    transform_rows(&mut scratch, ny, &col_fft);
    transpose(&scratch, ny, nx, data);
}

/// Unnormalized forward 2-D FFT.
pub fn fft2(data: &mut Vec<Complex64>, nx: usize, ny: usize) {
    fft2_direction(data, nx, ny, FftDirection::Forward);
}

/// Unnormalized forward 1-D FFT.
pub fn fft1(data: &mut [Complex64]) {
    let fft = plan(data.len(), FftDirection::Forward);
    fft.process(data);
}

/// Inverse 2-D FFT normalized by `1/(nx*ny)`, so `ifft2(fft2(x)) == x` up
/// to floating-point rounding.
pub fn ifft2(data: &mut Vec<Complex64>, nx: usize, ny: usize) {
    fft2_direction(data, nx, ny, FftDirection::Inverse);
    let scale = 1.0 / (nx * ny) as f64;
    data.par_iter_mut().for_each(|v| *v *= scale);
}

/// Swaps quadrants so the zero-frequency / grid-center sample moves between
/// index 0 and index n/2. Both grid dimensions are even (powers of two), so
/// the shift is its own inverse.
pub fn fftshift2(data: &mut [Complex64], nx: usize, ny: usize) {
    debug_assert_eq!(data.len(), nx * ny);
    let (hx, hy) = (nx / 2, ny / 2);
    // Swap left/right halves of every row, then top/bottom halves of every
    // column; together these exchange diagonal quadrants.
    for row in data.chunks_mut(nx) {
        for ix in 0..hx {
            row.swap(ix, ix + hx);
        }
    }
    for iy in 0..hy {
        for ix in 0..nx {
            data.swap(iy * nx + ix, (iy + hy) * nx + ix);
        }
    }
}

/// FFT sample frequency for bin `i` of an `n`-point transform with sample
/// pitch `d`, in cycles per meter (standard wrap-around ordering).
#[inline]
pub fn freq(i: usize, n: usize, d: f64) -> f64 {
    let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    k / (n as f64 * d)
}
