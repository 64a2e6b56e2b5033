//! Dense products with a row-major design matrix.
//!
//! The transposed product dominates solver time at full descriptor size, so it
//! streams the matrix once and splits the output columns across threads.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::scalar::Real;

const COL_CHUNK: usize = 2048;

/// `out = X^T r` for a standard-layout `X`.
pub(crate) fn xt_dot<T: Real>(x: ArrayView2<'_, T>, r: &[T], out: &mut [T]) {
    let (n, k) = x.dim();
    debug_assert_eq!(r.len(), n);
    debug_assert_eq!(out.len(), k);
    let data = x.as_slice().expect("design matrix in standard layout");
    out.par_chunks_mut(COL_CHUNK)
        .enumerate()
        .for_each(|(ci, acc)| {
            acc.iter_mut().for_each(|a| *a = T::zero());
            let start = ci * COL_CHUNK;
            for (i, &ri) in r.iter().enumerate() {
                if ri == T::zero() {
                    continue;
                }
                let seg = &data[i * k + start..i * k + start + acc.len()];
                for (a, &b) in acc.iter_mut().zip(seg) {
                    *a += ri * b;
                }
            }
        });
}

/// `out = X w`, only touching the columns where `w` is nonzero.
pub(crate) fn x_dot<T: Real>(x: ArrayView2<'_, T>, w: &[T], out: &mut [T]) {
    let (n, k) = x.dim();
    debug_assert_eq!(w.len(), k);
    debug_assert_eq!(out.len(), n);
    let data = x.as_slice().expect("design matrix in standard layout");
    let support: Vec<usize> = (0..k).filter(|&j| w[j] != T::zero()).collect();
    if support.len() * 4 < k {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &data[i * k..(i + 1) * k];
            *o = support.iter().map(|&j| row[j] * w[j]).sum();
        });
    } else {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &data[i * k..(i + 1) * k];
            *o = row.iter().zip(w).map(|(&a, &b)| a * b).sum();
        });
    }
}
