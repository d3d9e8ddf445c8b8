//! The K spatial LSTMs and the depth LSTM applied at every position.
//!
//! All K spatial cells at a position read the same input state through the
//! same shared weights, so their gate pre-activations are computed once per
//! position and reused with each direction's own memory.

use super::{LayerConfig, LayerState, LayerWeights};
use crate::error::{Error, Result};
use crate::lstm::{cell_backward, cell_forward, HUpdate};
use crate::numerics::{kernels, Scalar, Tensor};

/// Everything [`lstm_stage_backward`] needs from a forward stage.
#[derive(Debug, Clone)]
pub struct StageCache<T> {
    pub(crate) a: Tensor<T>,
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) directions: usize,
    pub(crate) mode: HUpdate,
    /// `P x K x 4d` spatial gate activations.
    gates_s: Vec<T>,
    /// `P x 4d` depth gate activations.
    gates_e: Vec<T>,
    m_s_prev: Vec<T>,
    m_e_prev: Vec<T>,
    m_s_next: Vec<T>,
    m_e_next: Vec<T>,
    h_s_next: Vec<T>,
    h_e_next: Vec<T>,
}

fn preactivations<T: Scalar>(a: &Tensor<T>, w: &crate::lstm::GateWeights<T>) -> Vec<T> {
    let (rows, inner) = (a.shape()[0], a.shape()[1]);
    let d4 = 4 * w.hidden();
    let mut z = vec![T::zero(); rows * d4];
    kernels::gemm_nt(a.data(), &w.stacked(), inner, &mut z);
    if let Some(b) = w.stacked_bias() {
        for row in z.chunks_mut(d4) {
            kernels::axpy(T::one(), &b, row);
        }
    }
    z
}

/// Runs all K+1 LSTMs at every position on the assembled input states `a`
/// (`P x D`, `P = height·width`) with the given previous memories.
pub fn lstm_stage<T: Scalar>(
    a: &Tensor<T>,
    height: usize,
    width: usize,
    m_spatial: &Tensor<T>,
    m_depth: &Tensor<T>,
    weights: &LayerWeights<T>,
    cfg: &LayerConfig,
) -> Result<(LayerState<T>, StageCache<T>)> {
    weights.validate()?;
    let k = cfg.directions.len();
    let d = weights.hidden();
    let p_count = height * width;
    if a.shape() != [p_count, weights.input()] {
        return Err(Error::dim("lstm_stage input", a.shape(), &[p_count, weights.input()]));
    }
    if m_spatial.shape() != [height, width, k, d] {
        return Err(Error::dim("lstm_stage spatial memory", m_spatial.shape(), &[height, width, k, d]));
    }
    if m_depth.shape() != [height, width, d] {
        return Err(Error::dim("lstm_stage depth memory", m_depth.shape(), &[height, width, d]));
    }
    let zs = preactivations(a, &weights.ws);
    let ze = preactivations(a, &weights.we);
    let d4 = 4 * d;

    let mut gates_s = vec![T::zero(); p_count * k * d4];
    let mut m_s_next = vec![T::zero(); p_count * k * d];
    let mut h_s_next = vec![T::zero(); p_count * k * d];
    let m_s_prev = m_spatial.data();
    for p in 0..p_count {
        let pre = &zs[p * d4..(p + 1) * d4];
        for n in 0..k {
            let cell = p * k + n;
            cell_forward(
                pre,
                &m_s_prev[cell * d..(cell + 1) * d],
                cfg.mode,
                &mut gates_s[cell * d4..(cell + 1) * d4],
                &mut m_s_next[cell * d..(cell + 1) * d],
                &mut h_s_next[cell * d..(cell + 1) * d],
            );
        }
    }
    let mut gates_e = vec![T::zero(); p_count * d4];
    let mut m_e_next = vec![T::zero(); p_count * d];
    let mut h_e_next = vec![T::zero(); p_count * d];
    let m_e_prev = m_depth.data();
    for p in 0..p_count {
        cell_forward(
            &ze[p * d4..(p + 1) * d4],
            &m_e_prev[p * d..(p + 1) * d],
            cfg.mode,
            &mut gates_e[p * d4..(p + 1) * d4],
            &mut m_e_next[p * d..(p + 1) * d],
            &mut h_e_next[p * d..(p + 1) * d],
        );
    }

    let h_out = Tensor::new(&[height, width, k, d], h_s_next.clone())?;
    let state = LayerState {
        h_in: super::route_hidden(&h_out, &cfg.directions)?,
        h_out,
        h_depth: Tensor::new(&[height, width, d], h_e_next.clone())?,
        m_spatial: Tensor::new(&[height, width, k, d], m_s_next.clone())?,
        m_depth: Tensor::new(&[height, width, d], m_e_next.clone())?,
    };
    let cache = StageCache {
        a: a.clone(),
        height,
        width,
        directions: k,
        mode: cfg.mode,
        gates_s,
        gates_e,
        m_s_prev: m_s_prev.to_vec(),
        m_e_prev: m_e_prev.to_vec(),
        m_s_next,
        m_e_next,
        h_s_next,
        h_e_next,
    };
    Ok((state, cache))
}

/// Gradients flowing out of [`lstm_stage_backward`].
#[derive(Debug, Clone)]
pub struct StageGrads<T> {
    /// Gradient of the assembled inputs, `P x D`.
    pub d_a: Tensor<T>,
    pub d_m_spatial: Tensor<T>,
    pub d_m_depth: Tensor<T>,
}

/// Adjoint of [`lstm_stage`]. `d_h_out` is the gradient on the outgoing
/// (pre-routing) directional hidden map. Weight gradients accumulate into
/// `grads`.
pub fn lstm_stage_backward<T: Scalar>(
    cache: &StageCache<T>,
    weights: &LayerWeights<T>,
    d_h_out: &Tensor<T>,
    d_h_depth: &Tensor<T>,
    d_m_spatial: &Tensor<T>,
    d_m_depth: &Tensor<T>,
    grads: &mut LayerWeights<T>,
) -> Result<StageGrads<T>> {
    let (h, w, k) = (cache.height, cache.width, cache.directions);
    let d = weights.hidden();
    let d4 = 4 * d;
    let p_count = h * w;
    let inner = weights.input();
    if cache.a.shape() != [p_count, inner] || grads.input() != inner || grads.hidden() != d {
        return Err(Error::Contract("stage cache does not match weights".into()));
    }
    for (t, want) in [
        (d_h_out, vec![h, w, k, d]),
        (d_m_spatial, vec![h, w, k, d]),
        (d_h_depth, vec![h, w, d]),
        (d_m_depth, vec![h, w, d]),
    ] {
        if t.shape() != want.as_slice() {
            return Err(Error::dim("lstm_stage_backward", t.shape(), &want));
        }
    }

    let mut dzs = vec![T::zero(); p_count * d4];
    let mut dzs_cell = vec![T::zero(); d4];
    let mut dm_s_prev = vec![T::zero(); p_count * k * d];
    let (dh_s, dm_s) = (d_h_out.data(), d_m_spatial.data());
    for p in 0..p_count {
        for n in 0..k {
            let cell = p * k + n;
            let r = cell * d..(cell + 1) * d;
            cell_backward(
                &cache.gates_s[cell * d4..(cell + 1) * d4],
                &cache.m_s_prev[r.clone()],
                &cache.m_s_next[r.clone()],
                &cache.h_s_next[r.clone()],
                cache.mode,
                &dh_s[r.clone()],
                &dm_s[r.clone()],
                &mut dzs_cell,
                &mut dm_s_prev[r],
            );
            kernels::axpy(T::one(), &dzs_cell, &mut dzs[p * d4..(p + 1) * d4]);
        }
    }
    let mut dze = vec![T::zero(); p_count * d4];
    let mut dm_e_prev = vec![T::zero(); p_count * d];
    let (dh_e, dm_e) = (d_h_depth.data(), d_m_depth.data());
    for p in 0..p_count {
        let r = p * d..(p + 1) * d;
        cell_backward(
            &cache.gates_e[p * d4..(p + 1) * d4],
            &cache.m_e_prev[r.clone()],
            &cache.m_e_next[r.clone()],
            &cache.h_e_next[r.clone()],
            cache.mode,
            &dh_e[r.clone()],
            &dm_e[r.clone()],
            &mut dze[p * d4..(p + 1) * d4],
            &mut dm_e_prev[r],
        );
    }

    let mut d_a = vec![T::zero(); p_count * inner];
    kernels::gemm_nn_acc(&dzs, &weights.ws.stacked(), d4, &mut d_a);
    kernels::gemm_nn_acc(&dze, &weights.we.stacked(), d4, &mut d_a);

    for (dz, g) in [(&dzs, &mut grads.ws), (&dze, &mut grads.we)] {
        let mut dw = vec![T::zero(); d4 * inner];
        kernels::gemm_tn_acc(dz, cache.a.data(), d4, &mut dw);
        let db = g.b.is_some().then(|| {
            let mut db = vec![T::zero(); d4];
            for row in dz.chunks(d4) {
                kernels::axpy(T::one(), row, &mut db);
            }
            db
        });
        g.accumulate_stacked(&dw, db.as_deref());
    }

    Ok(StageGrads {
        d_a: Tensor::new(&[p_count, inner], d_a)?,
        d_m_spatial: Tensor::new(&[h, w, k, d], dm_s_prev)?,
        d_m_depth: Tensor::new(&[h, w, d], dm_e_prev)?,
    })
}
