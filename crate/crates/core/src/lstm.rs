//! The single LSTM transition used by every cell in the network.
//!
//! ```text
//! g_u = σ(W_u H + b_u)    g_f = σ(W_f H + b_f)
//! g_o = σ(W_o H + b_o)    g_c = tanh(W_c H + b_c)
//! m'  = g_f ⊙ m + g_u ⊙ g_c
//! h'  = tanh(g_o ⊙ m)      (HUpdate::StrictPaper, reads the previous memory)
//! h'  = g_o ⊙ tanh(m')     (HUpdate::Standard)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kernels, sigmoid, Scalar, Tensor};

/// How the hidden output is formed from the output gate and memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HUpdate {
    /// `h' = tanh(g_o ⊙ m_prev)`, the update with the previous memory cell.
    #[default]
    StrictPaper,
    /// `h' = g_o ⊙ tanh(m_next)`.
    Standard,
}

/// Gate order used for every `[_; 4]` in this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Cell];

    /// Short suffix used in parameter names (`wu`, `bf`, ...).
    pub fn suffix(self) -> char {
        match self {
            Gate::Input => 'u',
            Gate::Forget => 'f',
            Gate::Output => 'o',
            Gate::Cell => 'c',
        }
    }
}

/// The four gate matrices (`hidden x input`) and optional biases of one LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights<T> {
    pub w: [Tensor<T>; 4],
    pub b: Option<[Tensor<T>; 4]>,
}

impl<T: Scalar> GateWeights<T> {
    pub fn zeros(hidden: usize, input: usize, biases: bool) -> Self {
        Self {
            w: std::array::from_fn(|_| Tensor::zeros(&[hidden, input])),
            b: biases.then(|| std::array::from_fn(|_| Tensor::zeros(&[hidden]))),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: std::array::from_fn(|i| self.w[i].zeros_like()),
            b: self.b.as_ref().map(|b| std::array::from_fn(|i| b[i].zeros_like())),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w[0].shape()[0]
    }

    pub fn input(&self) -> usize {
        self.w[0].shape()[1]
    }

    pub fn param_count(&self) -> usize {
        let bias = self.b.as_ref().map_or(0, |b| b.iter().map(Tensor::len).sum());
        self.w.iter().map(Tensor::len).sum::<usize>() + bias
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.w[0].shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::dim("GateWeights", &shape, &[0, 0]));
        }
        for w in &self.w[1..] {
            if w.shape() != shape.as_slice() {
                return Err(Error::dim("GateWeights", w.shape(), &shape));
            }
        }
        if let Some(b) = &self.b {
            for b in b {
                if b.shape() != [shape[0]] {
                    return Err(Error::dim("GateWeights bias", b.shape(), &shape[..1]));
                }
            }
        }
        Ok(())
    }

    /// Gate matrices stacked into one `4·hidden x input` row-major buffer.
    pub(crate) fn stacked(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(4 * self.w[0].len());
        for w in &self.w {
            out.extend_from_slice(w.data());
        }
        out
    }

    pub(crate) fn stacked_bias(&self) -> Option<Vec<T>> {
        self.b.as_ref().map(|b| {
            let mut out = Vec::with_capacity(4 * b[0].len());
            for b in b {
                out.extend_from_slice(b.data());
            }
            out
        })
    }

    /// Adds stacked gradients (as produced by the layer kernels) into `self`.
    pub(crate) fn accumulate_stacked(&mut self, dw: &[T], db: Option<&[T]>) {
        let n = self.w[0].len();
        for (g, w) in self.w.iter_mut().enumerate() {
            kernels::axpy(T::one(), &dw[g * n..(g + 1) * n], w.data_mut());
        }
        if let (Some(b), Some(db)) = (self.b.as_mut(), db) {
            let d = b[0].len();
            for (g, b) in b.iter_mut().enumerate() {
                kernels::axpy(T::one(), &db[g * d..(g + 1) * d], b.data_mut());
            }
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = self.w.iter().collect();
        if let Some(b) = &self.b {
            v.extend(b.iter());
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = self.w.iter_mut().collect();
        if let Some(b) = &mut self.b {
            v.extend(b.iter_mut());
        }
        v
    }
}

/// Pointwise part of the LSTM for one cell.
///
/// `pre` holds the four gate pre-activations back to back (`4·d`). Gate
/// activations are written to `gates` in the same layout.
#[inline]
pub(crate) fn cell_forward<T: Scalar>(
    pre: &[T],
    m_prev: &[T],
    mode: HUpdate,
    gates: &mut [T],
    m_next: &mut [T],
    h_next: &mut [T],
) {
    let d = m_prev.len();
    for k in 0..d {
        let gu = sigmoid(pre[k]);
        let gf = sigmoid(pre[d + k]);
        let go = sigmoid(pre[2 * d + k]);
        let gc = pre[3 * d + k].tanh();
        let m = gf * m_prev[k] + gu * gc;
        gates[k] = gu;
        gates[d + k] = gf;
        gates[2 * d + k] = go;
        gates[3 * d + k] = gc;
        m_next[k] = m;
        h_next[k] = match mode {
            HUpdate::StrictPaper => (go * m_prev[k]).tanh(),
            HUpdate::Standard => go * m.tanh(),
        };
    }
}

/// Adjoint of [`cell_forward`]. Writes pre-activation gradients into `d_pre`
/// (overwriting) and returns the memory gradient in `d_m_prev` (overwriting).
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn cell_backward<T: Scalar>(
    gates: &[T],
    m_prev: &[T],
    m_next: &[T],
    h_next: &[T],
    mode: HUpdate,
    dh: &[T],
    dm: &[T],
    d_pre: &mut [T],
    d_m_prev: &mut [T],
) {
    let d = m_prev.len();
    let one = T::one();
    for k in 0..d {
        let (gu, gf, go, gc) = (gates[k], gates[d + k], gates[2 * d + k], gates[3 * d + k]);
        let (dgo, dm_tot, dm_extra) = match mode {
            HUpdate::StrictPaper => {
                let ds = dh[k] * (one - h_next[k] * h_next[k]);
                (ds * m_prev[k], dm[k], ds * go)
            }
            HUpdate::Standard => {
                let tm = m_next[k].tanh();
                (dh[k] * tm, dm[k] + dh[k] * go * (one - tm * tm), T::zero())
            }
        };
        let dgf = dm_tot * m_prev[k];
        let dgu = dm_tot * gc;
        let dgc = dm_tot * gu;
        d_m_prev[k] = dm_tot * gf + dm_extra;
        d_pre[k] = dgu * gu * (one - gu);
        d_pre[d + k] = dgf * gf * (one - gf);
        d_pre[2 * d + k] = dgo * go * (one - go);
        d_pre[3 * d + k] = dgc * (one - gc * gc);
    }
}

/// Forward state of one LSTM evaluation, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellIO<T> {
    pub h_in: Tensor<T>,
    pub m_prev: Tensor<T>,
    pub h_next: Tensor<T>,
    pub m_next: Tensor<T>,
    /// Activations of the input, forget, output and cell gates.
    pub gates: [Tensor<T>; 4],
    pub mode: HUpdate,
}

pub fn lstm_forward<T: Scalar>(
    h_in: &Tensor<T>,
    m_prev: &Tensor<T>,
    w: &GateWeights<T>,
    mode: HUpdate,
) -> Result<CellIO<T>> {
    w.validate()?;
    let (d, n) = (w.hidden(), w.input());
    if h_in.shape() != [n] {
        return Err(Error::dim("lstm_forward input", h_in.shape(), &[n]));
    }
    if m_prev.shape() != [d] {
        return Err(Error::dim("lstm_forward memory", m_prev.shape(), &[d]));
    }
    let mut pre = vec![T::zero(); 4 * d];
    kernels::gemm_nt(h_in.data(), &w.stacked(), n, &mut pre);
    if let Some(b) = w.stacked_bias() {
        kernels::axpy(T::one(), &b, &mut pre);
    }
    let mut gates = vec![T::zero(); 4 * d];
    let mut m_next = vec![T::zero(); d];
    let mut h_next = vec![T::zero(); d];
    cell_forward(&pre, m_prev.data(), mode, &mut gates, &mut m_next, &mut h_next);
    Ok(CellIO {
        h_in: h_in.clone(),
        m_prev: m_prev.clone(),
        h_next: Tensor::new(&[d], h_next)?,
        m_next: Tensor::new(&[d], m_next)?,
        gates: std::array::from_fn(|g| Tensor::new(&[d], gates[g * d..(g + 1) * d].to_vec()).unwrap()),
        mode,
    })
}

/// Reverse-mode adjoint of [`lstm_forward`].
///
/// Returns `(dH_in, dm_prev)`; weight gradients are added into `dw`.
pub fn lstm_backward<T: Scalar>(
    cache: &CellIO<T>,
    dh_next: &Tensor<T>,
    dm_next: &Tensor<T>,
    w: &GateWeights<T>,
    mode: HUpdate,
    dw: &mut GateWeights<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if cache.mode != mode {
        return Err(Error::Contract(format!(
            "lstm_backward called with {mode:?} on a {:?} cache",
            cache.mode
        )));
    }
    let (d, n) = (w.hidden(), w.input());
    dh_next.same_shape(&cache.h_next, "lstm_backward dh")?;
    dm_next.same_shape(&cache.m_next, "lstm_backward dm")?;
    if cache.h_in.shape() != [n] || dw.w[0].shape() != [d, n] || dw.b.is_some() != w.b.is_some() {
        return Err(Error::Contract("lstm_backward weights do not match cache".into()));
    }
    let gates: Vec<T> = cache.gates.iter().flat_map(|g| g.data().iter().copied()).collect();
    let mut d_pre = vec![T::zero(); 4 * d];
    let mut dm_prev = vec![T::zero(); d];
    cell_backward(
        &gates,
        cache.m_prev.data(),
        cache.m_next.data(),
        cache.h_next.data(),
        mode,
        dh_next.data(),
        dm_next.data(),
        &mut d_pre,
        &mut dm_prev,
    );
    let mut dh_in = vec![T::zero(); n];
    kernels::gemm_nn_acc(&d_pre, &w.stacked(), 4 * d, &mut dh_in);
    let mut dw_stacked = vec![T::zero(); 4 * d * n];
    kernels::gemm_tn_acc(&d_pre, cache.h_in.data(), 4 * d, &mut dw_stacked);
    dw.accumulate_stacked(&dw_stacked, Some(&d_pre));
    Ok((Tensor::new(&[n], dh_in)?, Tensor::new(&[d], dm_prev)?))
}
