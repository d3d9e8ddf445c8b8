//! Slice-level dense kernels shared by the tensor operations and the layers.
//!
//! Every reduction runs in a fixed order that does not depend on the number
//! of worker threads: work is split over output rows only, never over the
//! summed dimension.

use rayon::prelude::*;

use super::Scalar;

const LANES: usize = 8;
/// Below this many multiply-adds a kernel stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// Dot product with eight interleaved partial sums.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let xa = &a[c * LANES..(c + 1) * LANES];
        let xb = &b[c * LANES..(c + 1) * LANES];
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    let s01 = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    let s23 = (acc[4] + acc[5]) + (acc[6] + acc[7]);
    (s01 + s23) + tail
}

/// `y += alpha * x`.
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Output rows handed to one task. Fixed, so the split never depends on the
/// thread count.
const ROW_BLOCK: usize = 16;

/// Runs `f(first_row, block)` over `ROW_BLOCK`-row blocks of `out`, in
/// parallel when `work` multiply-adds justify it.
fn for_row_blocks<T: Scalar>(out: &mut [T], row_len: usize, work: usize, f: impl Fn(usize, &mut [T]) + Sync) {
    if row_len == 0 || out.is_empty() {
        return;
    }
    let chunk = ROW_BLOCK * row_len;
    if work >= PAR_THRESHOLD {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, block)| f(i * ROW_BLOCK, block));
    } else {
        out.chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, block)| f(i * ROW_BLOCK, block));
    }
}

/// `out[p, r] = a[p, :] . b[r, :]` for `a: rows x inner`, `b: cols x inner`.
pub fn gemm_nt<T: Scalar>(a: &[T], b: &[T], inner: usize, out: &mut [T]) {
    let cols = b.len() / inner;
    let rows = a.len() / inner;
    assert!(a.len() == rows * inner && b.len() == cols * inner && out.len() == rows * cols);
    for_row_blocks(out, cols, rows * cols * inner, |p0, block| {
        let m = block.len() / cols;
        // SAFETY: rows p0..p0+m of `a` exist, `b` is read as its transpose
        // within bounds, and `block` is an exclusive m x cols slice.
        unsafe {
            T::gemm(
                m,
                inner,
                cols,
                a[p0 * inner..].as_ptr(),
                inner as isize,
                1,
                b.as_ptr(),
                1,
                inner as isize,
                T::zero(),
                block.as_mut_ptr(),
                cols as isize,
                1,
            );
        }
    });
}

/// `out[p, :] += sum_r g[p, r] * b[r, :]` for `g: rows x cols`, `b: cols x inner`.
pub fn gemm_nn_acc<T: Scalar>(g: &[T], b: &[T], cols: usize, out: &mut [T]) {
    let inner = b.len() / cols;
    let rows = g.len() / cols;
    assert!(g.len() == rows * cols && b.len() == cols * inner && out.len() == rows * inner);
    for_row_blocks(out, inner, rows * cols * inner, |p0, block| {
        let m = block.len() / inner;
        // SAFETY: rows p0..p0+m of `g` exist and `block` is exclusive.
        unsafe {
            T::gemm(
                m,
                cols,
                inner,
                g[p0 * cols..].as_ptr(),
                cols as isize,
                1,
                b.as_ptr(),
                inner as isize,
                1,
                T::one(),
                block.as_mut_ptr(),
                inner as isize,
                1,
            );
        }
    });
}

/// `out[r, :] += sum_p g[p, r] * a[p, :]` for `g: rows x cols`, `a: rows x inner`.
pub fn gemm_tn_acc<T: Scalar>(g: &[T], a: &[T], cols: usize, out: &mut [T]) {
    let inner = out.len() / cols;
    let rows = g.len() / cols;
    assert!(g.len() == rows * cols && a.len() == rows * inner && out.len() == cols * inner);
    for_row_blocks(out, inner, rows * cols * inner, |r0, block| {
        let m = block.len() / inner;
        // SAFETY: columns r0..r0+m of `g` exist in every row and `block` is
        // exclusive.
        unsafe {
            T::gemm(
                m,
                rows,
                inner,
                g[r0..].as_ptr(),
                1,
                cols as isize,
                a.as_ptr(),
                inner as isize,
                1,
                T::one(),
                block.as_mut_ptr(),
                inner as isize,
                1,
            );
        }
    });
}
