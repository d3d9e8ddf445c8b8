use super::DirectionSet;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

fn dims<T: Scalar>(t: &Tensor<T>, dirs: &DirectionSet, op: &'static str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [h, w, k, d] if *k == dirs.len() => Ok((*h, *w, *d)),
        s => Err(Error::dim(op, s, &[0, 0, dirs.len(), 0])),
    }
}

/// Moves every outgoing directional hidden vector to the neighbor it points at.
///
/// `incoming[j, n] = h_out[j - offset_n, n]`, zero when the source is off-image.
pub fn route_hidden<T: Scalar>(h_out: &Tensor<T>, dirs: &DirectionSet) -> Result<Tensor<T>> {
    let (h, w, d) = dims(h_out, dirs, "route_hidden")?;
    let k = dirs.len();
    let src = h_out.data();
    let mut out = Tensor::zeros(h_out.shape());
    let dst = out.data_mut();
    for r in 0..h {
        for c in 0..w {
            for n in 0..k {
                if let Some((sr, sc)) = dirs.source(n, r, c, h, w) {
                    let to = ((r * w + c) * k + n) * d;
                    let from = ((sr * w + sc) * k + n) * d;
                    dst[to..to + d].copy_from_slice(&src[from..from + d]);
                }
            }
        }
    }
    Ok(out)
}

/// Transpose of [`route_hidden`]: gradients scatter back to their sources.
pub fn route_hidden_backward<T: Scalar>(d_incoming: &Tensor<T>, dirs: &DirectionSet) -> Result<Tensor<T>> {
    let mut out = Tensor::zeros(d_incoming.shape());
    accumulate_route_backward(d_incoming, dirs, &mut out)?;
    Ok(out)
}

pub(crate) fn accumulate_route_backward<T: Scalar>(
    d_incoming: &Tensor<T>,
    dirs: &DirectionSet,
    out: &mut Tensor<T>,
) -> Result<()> {
    let (h, w, d) = dims(d_incoming, dirs, "route_hidden_backward")?;
    d_incoming.same_shape(out, "route_hidden_backward")?;
    let k = dirs.len();
    let g = d_incoming.data();
    let dst = out.data_mut();
    for r in 0..h {
        for c in 0..w {
            for n in 0..k {
                if let Some((sr, sc)) = dirs.source(n, r, c, h, w) {
                    let from = ((r * w + c) * k + n) * d;
                    let to = ((sr * w + sc) * k + n) * d;
                    for i in 0..d {
                        dst[to + i] += g[from + i];
                    }
                }
            }
        }
    }
    Ok(())
}
