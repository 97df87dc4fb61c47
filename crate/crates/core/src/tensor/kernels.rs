//! Dense matrix kernels over row-major buffers.
//!
//! Every kernel partitions work by output row and accumulates each row in a
//! fixed order, so [`Exec::Sequential`] and [`Exec::Parallel`] return
//! bit-identical results.

use super::Real;
use crate::par::{for_each_row, Exec};

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `out[b] = a[b] · w[b]` for `a: [batch, m, k]`, `w: [batch, k, n]`.
pub fn matmul_nn<T: Real>(
    exec: Exec,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    w: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), batch * m * k);
    debug_assert_eq!(w.len(), batch * k * n);
    debug_assert_eq!(out.len(), batch * m * n);
    for_each_row(exec, out, n, |r, row| {
        let bi = r / m;
        let a_row = &a[r * k..(r + 1) * k];
        let w_b = &w[bi * k * n..(bi + 1) * k * n];
        row.iter_mut().for_each(|x| *x = T::zero());
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik != T::zero() {
                axpy(aik, &w_b[kk * n..(kk + 1) * n], row);
            }
        }
    });
}

/// `out[b] = a[b] · w[b]ᵀ` for `a: [batch, m, k]`, `w: [batch, n, k]`.
pub fn matmul_nt<T: Real>(
    exec: Exec,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    w: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), batch * m * k);
    debug_assert_eq!(w.len(), batch * n * k);
    debug_assert_eq!(out.len(), batch * m * n);
    for_each_row(exec, out, n, |r, row| {
        let bi = r / m;
        let a_row = &a[r * k..(r + 1) * k];
        let w_b = &w[bi * n * k..(bi + 1) * n * k];
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(a_row, &w_b[j * k..(j + 1) * k]);
        }
    });
}

/// `out[b] = a[b]ᵀ · c[b]` for `a: [batch, m, k]`, `c: [batch, m, n]`.
pub fn matmul_tn<T: Real>(
    exec: Exec,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    c: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), batch * m * k);
    debug_assert_eq!(c.len(), batch * m * n);
    debug_assert_eq!(out.len(), batch * k * n);
    for_each_row(exec, out, n, |r, row| {
        let bi = r / k;
        let kk = r % k;
        row.iter_mut().for_each(|x| *x = T::zero());
        for i in 0..m {
            let aik = a[(bi * m + i) * k + kk];
            if aik != T::zero() {
                let c_row = &c[(bi * m + i) * n..(bi * m + i + 1) * n];
                axpy(aik, c_row, row);
            }
        }
    });
}
