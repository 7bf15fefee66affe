//! FFT plumbing: cached plans, axis transforms on 2-d arrays, and the
//! canonical frequency indexing shared by every spectral operation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array1, Array2};
use rustfft::{Fft, FftPlanner};

use crate::C64;

type PlanKey = (usize, bool);

fn plan_cache() -> &'static Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = plan_cache().lock().unwrap();
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Canonical signed frequency of FFT bin `k` for transform length `n`:
/// 0, 1, ..., n/2-1, -n/2, ..., -1. The Nyquist bin is kept at -n/2.
#[inline]
pub fn bin_freq(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Forward DFT of a vector in place, unnormalized: X_k = sum_j x_j w^{-jk}.
pub fn fft_vec(v: &mut [C64]) {
    let p = plan(v.len(), false);
    let mut scratch = vec![C64::default(); p.get_inplace_scratch_len()];
    p.process_with_scratch(v, &mut scratch);
}


/// Transform every row (axis 1 lanes) of a standard-layout array in place.
pub fn fft_rows(a: &mut Array2<C64>, inverse: bool) {
    let (rows, cols) = a.dim();
    let p = plan(cols, inverse);
    let mut scratch = vec![C64::default(); p.get_inplace_scratch_len()];
    let slice = a.as_slice_mut().expect("row transform needs standard layout");
    for row in slice.chunks_mut(cols) {
        p.process_with_scratch(row, &mut scratch);
    }
    if inverse {
        let s = 1.0 / cols as f64;
        for z in slice.iter_mut() {
            *z *= s;
        }
    }
    let _ = rows;
}

/// Cache-blocked out-of-place transpose; strided ndarray views are far too
/// slow for the per-step hot path.
pub fn transpose(a: &Array2<C64>) -> Array2<C64> {
    let (r, c) = a.dim();
    let mut out = Array2::<C64>::zeros((c, r));
    let src = a.as_slice().expect("transpose needs standard layout");
    let dst = out.as_slice_mut().unwrap();
    const B: usize = 32;
    let mut ib = 0;
    while ib < r {
        let imax = (ib + B).min(r);
        let mut jb = 0;
        while jb < c {
            let jmax = (jb + B).min(c);
            for i in ib..imax {
                let row = &src[i * c..i * c + c];
                for j in jb..jmax {
                    dst[j * r + i] = row[j];
                }
            }
            jb += B;
        }
        ib += B;
    }
    out
}

/// Transform every column (axis 0 lanes) in place via a transpose round trip.
pub fn fft_cols(a: &mut Array2<C64>, inverse: bool) {
    let mut t = transpose(a);
    fft_rows(&mut t, inverse);
    *a = transpose(&t);
}

/// Column-direction spectrum in transposed layout: out[(j, b)] holds the
/// unnormalized DFT over the row index of column j.
pub fn col_spectrum(a: &Array2<C64>) -> Array2<C64> {
    let mut t = transpose(a);
    fft_rows(&mut t, false);
    t
}

/// Inverse of [`col_spectrum`] after scaling bin b of every column by
/// m[b] / N: realizes IF_cols(diag(m) F_cols a).
pub fn col_spectrum_apply(spec: &Array2<C64>, m: &[C64]) -> Array2<C64> {
    let (cols, rows) = spec.dim();
    let mut t = spec.clone();
    {
        let pi = plan(rows, true);
        let mut scratch = vec![C64::default(); pi.get_inplace_scratch_len()];
        let slice = t.as_slice_mut().unwrap();
        let s = 1.0 / rows as f64;
        for lane in slice.chunks_mut(rows) {
            for (z, mk) in lane.iter_mut().zip(m) {
                *z *= mk * s;
            }
            pi.process_with_scratch(lane, &mut scratch);
        }
    }
    let _ = cols;
    transpose(&t)
}

/// Apply a Fourier multiplier along axis 0 in one transpose round trip:
/// a <- IF_cols (m .* F_cols a).
pub fn mult_cols(a: &mut Array2<C64>, m: &[C64]) {
    let (rows, _cols) = a.dim();
    let mut t = transpose(a);
    {
        let p = plan(rows, false);
        let pi = plan(rows, true);
        let mut scratch = vec![
            C64::default();
            p.get_inplace_scratch_len().max(pi.get_inplace_scratch_len())
        ];
        let slice = t.as_slice_mut().unwrap();
        let s = 1.0 / rows as f64;
        for lane in slice.chunks_mut(rows) {
            p.process_with_scratch(lane, &mut scratch);
            for (z, mk) in lane.iter_mut().zip(m) {
                *z *= mk * s;
            }
            pi.process_with_scratch(lane, &mut scratch);
        }
    }
    *a = transpose(&t);
}

/// Right Fourier multiplier on the row index: a <- (IF_rows a) scaled fft'd,
/// realizing A * (IF diag(m) F) for symmetric DFT matrices.
pub fn mult_rows_right(a: &Array2<C64>, m: &[C64]) -> Array2<C64> {
    let mut out = a.clone();
    fft_rows(&mut out, true);
    let (rows, cols) = out.dim();
    let slice = out.as_slice_mut().unwrap();
    for r in 0..rows {
        let lane = &mut slice[r * cols..(r + 1) * cols];
        for (z, mk) in lane.iter_mut().zip(m) {
            *z *= mk;
        }
    }
    fft_rows(&mut out, false);
    out
}

/// Zero-padded spectral upsampling of each column by a factor of two:
/// input N x M, output 2N x M sampling the same trigonometric interpolant
/// on the half-step grid. The Nyquist bin stays at frequency -N/2.
pub fn upsample_cols_2x(a: &Array2<C64>) -> Array2<C64> {
    let (n, m) = a.dim();
    let mut spec = a.clone();
    fft_cols(&mut spec, false);
    let mut padded = Array2::<C64>::zeros((2 * n, m));
    for k in 0..n {
        let f = bin_freq(k, n);
        let dst = if f >= 0 { f as usize } else { (2 * n) as i64 as usize - (-f) as usize };
        for j in 0..m {
            // forward FFT left coefficients unnormalized; fold 1/n in here
            padded[(dst, j)] = spec[(k, j)] / n as f64;
        }
    }
    // inverse without normalization realizes sum_f c_f W^{f m}
    let (rows2, _) = padded.dim();
    let p = plan(rows2, true);
    let mut t = padded.t().as_standard_layout().into_owned();
    let mut scratch = vec![C64::default(); p.get_inplace_scratch_len()];
    let slice = t.as_slice_mut().unwrap();
    for row in slice.chunks_mut(rows2) {
        p.process_with_scratch(row, &mut scratch);
    }
    let mut out = Array2::<C64>::zeros((2 * n, m));
    out.assign(&t.t());
    out
}

/// First `order` spectral derivative multipliers (i*kappa)^order for a
/// periodic axis of length `n` with box width `width`. Odd orders zero the
/// Nyquist bin so real fields stay real.
pub fn derivative_multiplier(n: usize, width: f64, order: u32) -> Array1<C64> {
    let mut m = Array1::<C64>::zeros(n);
    for k in 0..n {
        let f = bin_freq(k, n);
        if order % 2 == 1 && f == -(n as i64) / 2 {
            continue;
        }
        let kappa = 2.0 * std::f64::consts::PI * f as f64 / width;
        m[k] = (C64::new(0.0, kappa)).powu(order);
    }
    m
}
