use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Argmax positions recorded by [`grid_max_pool`], one per (grid_row, grid_col, channel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndexMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Row-major over (grid_row, grid_col, channel); each entry is a (row, col) in the source map.
    pub argmax: Vec<(usize, usize)>,
}

/// Half-open bounds of grid cell `g` (0..3) along an axis of length `extent`.
#[inline]
pub fn grid_bounds(g: usize, extent: usize) -> (usize, usize) {
    (g * extent / 3, (g + 1) * extent / 3)
}

/// Max pooling over a fixed 3x3 partition of `map: H x W x d`.
///
/// Ties go to the smallest row, then the smallest column.
pub fn grid_max_pool<T: Scalar>(map: &Tensor<T>) -> Result<(Tensor<T>, PoolIndexMap)> {
    let (h, w, d) = match map.shape() {
        [h, w, d] => (*h, *w, *d),
        s => return Err(Error::dim("grid_max_pool", s, &[3, 3, 1])),
    };
    if h < 3 || w < 3 {
        return Err(Error::InputTooSmall { height: h, width: w });
    }
    let x = map.data();
    let mut pooled = Vec::with_capacity(9 * d);
    let mut argmax = Vec::with_capacity(9 * d);
    for gr in 0..3 {
        let (r0, r1) = grid_bounds(gr, h);
        for gc in 0..3 {
            let (c0, c1) = grid_bounds(gc, w);
            for ch in 0..d {
                let mut best = x[(r0 * w + c0) * d + ch];
                let mut at = (r0, c0);
                for r in r0..r1 {
                    for c in c0..c1 {
                        let v = x[(r * w + c) * d + ch];
                        if v > best {
                            best = v;
                            at = (r, c);
                        }
                    }
                }
                pooled.push(best);
                argmax.push(at);
            }
        }
    }
    Ok((
        Tensor::new(&[3, 3, d], pooled)?,
        PoolIndexMap {
            height: h,
            width: w,
            channels: d,
            argmax,
        },
    ))
}

/// Routes each pooled gradient to its recorded argmax cell.
pub fn grid_max_pool_backward<T: Scalar>(d_pooled: &[T], idx: &PoolIndexMap) -> Result<Tensor<T>> {
    let d = idx.channels;
    if d_pooled.len() != 9 * d {
        return Err(Error::dim("grid_max_pool_backward", &[d_pooled.len()], &[9 * d]));
    }
    let mut dm = Tensor::zeros(&[idx.height, idx.width, d]);
    accumulate_pool_backward(d_pooled, idx, dm.data_mut());
    Ok(dm)
}

pub(crate) fn accumulate_pool_backward<T: Scalar>(d_pooled: &[T], idx: &PoolIndexMap, out: &mut [T]) {
    let d = idx.channels;
    for (i, (&g, &(r, c))) in d_pooled.iter().zip(&idx.argmax).enumerate() {
        let ch = i % d;
        out[(r * idx.width + c) * d + ch] += g;
    }
}
