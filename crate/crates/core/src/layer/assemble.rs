//! Global hidden cells and the per-position input state
//! `H_j = [f, h^s_{j,1}, ..., h^s_{j,K}, h^e_j]`.

use super::LayerState;
use crate::error::{Error, Result};
use crate::numerics::{accumulate_pool_backward, grid_max_pool, PoolIndexMap, Scalar, Tensor};

/// 3x3 grid max-pool of the depth hidden map, flattened to `9·d` in
/// (grid_row, grid_col, channel) order.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalCells<T> {
    pub f: Tensor<T>,
    pub idx: PoolIndexMap,
}

pub fn compute_global_cells<T: Scalar>(h_depth: &Tensor<T>) -> Result<GlobalCells<T>> {
    let (pooled, idx) = grid_max_pool(h_depth)?;
    let n = pooled.len();
    Ok(GlobalCells {
        f: pooled.reshape(&[n])?,
        idx,
    })
}

/// Input states of every position of one layer, `P x D` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled<T> {
    pub a: Tensor<T>,
    pub global: Option<GlobalCells<T>>,
}

/// Length of one assembled input state.
pub fn input_size(hidden: usize, directions: usize, use_global: bool) -> usize {
    (if use_global { 9 } else { 0 } + directions + 1) * hidden
}

pub fn assemble_input_state<T: Scalar>(
    state: &LayerState<T>,
    global: Option<&GlobalCells<T>>,
    row: usize,
    col: usize,
) -> Result<Tensor<T>> {
    let (h, w, k, d) = state.dims();
    if row >= h || col >= w {
        return Err(Error::dim("assemble_input_state", &[row, col], &[h, w]));
    }
    let g = global.map_or(0, |g| g.f.len());
    let mut out = Vec::with_capacity(g + (k + 1) * d);
    if let Some(g) = global {
        out.extend_from_slice(g.f.data());
    }
    let p = row * w + col;
    out.extend_from_slice(&state.h_in.data()[p * k * d..(p + 1) * k * d]);
    out.extend_from_slice(&state.h_depth.data()[p * d..(p + 1) * d]);
    let len = out.len();
    Tensor::new(&[len], out)
}

/// Assembles the input state of every position.
pub fn assemble<T: Scalar>(state: &LayerState<T>, use_global: bool) -> Result<Assembled<T>> {
    let (h, w, k, d) = state.dims();
    let global = if use_global {
        Some(compute_global_cells(&state.h_depth)?)
    } else {
        None
    };
    let g = global.as_ref().map_or(0, |g| g.f.len());
    let width = g + (k + 1) * d;
    let p_count = h * w;
    let mut a = Vec::with_capacity(p_count * width);
    let (h_in, h_depth) = (state.h_in.data(), state.h_depth.data());
    for p in 0..p_count {
        if let Some(g) = &global {
            a.extend_from_slice(g.f.data());
        }
        a.extend_from_slice(&h_in[p * k * d..(p + 1) * k * d]);
        a.extend_from_slice(&h_depth[p * d..(p + 1) * d]);
    }
    Ok(Assembled {
        a: Tensor::new(&[p_count, width], a)?,
        global,
    })
}

/// Scatters `d_a` (`P x D`) back onto the incoming hidden map and the depth
/// hidden map, routing the global block through the pooling argmax.
pub fn assemble_backward<T: Scalar>(
    d_a: &Tensor<T>,
    global: Option<&GlobalCells<T>>,
    d_h_in: &mut Tensor<T>,
    d_h_depth: &mut Tensor<T>,
) -> Result<()> {
    let (h, w, k, d) = match d_h_in.shape() {
        [h, w, k, d] => (*h, *w, *k, *d),
        s => return Err(Error::dim("assemble_backward", s, &[0, 0, 0, 0])),
    };
    let g = global.map_or(0, |g| g.f.len());
    let width = g + (k + 1) * d;
    if d_a.shape() != [h * w, width] || d_h_depth.shape() != [h, w, d] {
        return Err(Error::dim("assemble_backward", d_a.shape(), &[h * w, width]));
    }
    let src = d_a.data();
    let mut d_f = vec![T::zero(); g];
    {
        let dh_in = d_h_in.data_mut();
        for p in 0..h * w {
            let row = &src[p * width..(p + 1) * width];
            for (acc, &v) in d_f.iter_mut().zip(&row[..g]) {
                *acc += v;
            }
            for (acc, &v) in dh_in[p * k * d..(p + 1) * k * d].iter_mut().zip(&row[g..g + k * d]) {
                *acc += v;
            }
        }
    }
    let dh_depth = d_h_depth.data_mut();
    for p in 0..h * w {
        let row = &src[p * width + g + k * d..(p + 1) * width];
        for (acc, &v) in dh_depth[p * d..(p + 1) * d].iter_mut().zip(row) {
            *acc += v;
        }
    }
    if let Some(global) = global {
        accumulate_pool_backward(&d_f, &global.idx, dh_depth);
    }
    Ok(())
}
