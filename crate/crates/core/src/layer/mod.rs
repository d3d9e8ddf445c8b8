//! One local-global layer: global pooling of the depth hidden map, input-state
//! assembly, the K spatial and one depth LSTM update at every position, and
//! routing of the outgoing directional hidden cells to the neighbors.
//!
//! Memory cells stay at their position across layers; only hidden cells move.

mod assemble;
mod directions;
mod route;
mod stage;

pub use assemble::{
    assemble, assemble_backward, assemble_input_state, compute_global_cells, input_size, Assembled, GlobalCells,
};
pub use directions::DirectionSet;
pub use route::{route_hidden, route_hidden_backward};
pub(crate) use route::accumulate_route_backward;
pub use stage::{lstm_stage, lstm_stage_backward, StageCache, StageGrads};

use crate::error::{Error, Result};
use crate::lstm::{GateWeights, HUpdate};
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerConfig {
    pub directions: DirectionSet,
    pub use_global: bool,
    pub mode: HUpdate,
}

/// Hidden and memory maps carried between stacked layers.
///
/// Shapes: `h_in`, `h_out`, `m_spatial` are `H x W x K x d`; `h_depth` and
/// `m_depth` are `H x W x d`. `h_in` is always `route_hidden(h_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<T> {
    pub h_in: Tensor<T>,
    pub h_out: Tensor<T>,
    pub h_depth: Tensor<T>,
    pub m_spatial: Tensor<T>,
    pub m_depth: Tensor<T>,
}

impl<T: Scalar> LayerState<T> {
    pub fn zeros(height: usize, width: usize, directions: usize, hidden: usize) -> Self {
        let spatial = [height, width, directions, hidden];
        let depth = [height, width, hidden];
        Self {
            h_in: Tensor::zeros(&spatial),
            h_out: Tensor::zeros(&spatial),
            h_depth: Tensor::zeros(&depth),
            m_spatial: Tensor::zeros(&spatial),
            m_depth: Tensor::zeros(&depth),
        }
    }

    /// `(H, W, K, d)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.h_in.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.h_in.shape();
        if s.len() != 4 {
            return Err(Error::dim("LayerState", s, &[0, 0, 0, 0]));
        }
        for t in [&self.h_out, &self.m_spatial] {
            if t.shape() != s {
                return Err(Error::dim("LayerState spatial maps", t.shape(), s));
            }
        }
        for t in [&self.h_depth, &self.m_depth] {
            if t.shape() != [s[0], s[1], s[3]] {
                return Err(Error::dim("LayerState depth maps", t.shape(), &[s[0], s[1], s[3]]));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Tensor<T>; 5] {
        [&self.h_in, &self.h_out, &self.h_depth, &self.m_spatial, &self.m_depth]
    }
}

/// Shared weights of the spatial LSTMs (`ws`) and the depth LSTM (`we`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ws: GateWeights<T>,
    pub we: GateWeights<T>,
}

impl<T: Scalar> LayerWeights<T> {
    pub fn zeros(hidden: usize, input: usize, biases: bool) -> Self {
        Self {
            ws: GateWeights::zeros(hidden, input, biases),
            we: GateWeights::zeros(hidden, input, biases),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            ws: self.ws.zeros_like(),
            we: self.we.zeros_like(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.ws.hidden()
    }

    pub fn input(&self) -> usize {
        self.ws.input()
    }

    pub fn param_count(&self) -> usize {
        self.ws.param_count() + self.we.param_count()
    }

    pub fn validate(&self) -> Result<()> {
        self.ws.validate()?;
        self.we.validate()?;
        if self.ws.w[0].shape() != self.we.w[0].shape() || self.ws.b.is_some() != self.we.b.is_some() {
            return Err(Error::dim("LayerWeights", self.ws.w[0].shape(), self.we.w[0].shape()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    pub assembled: Assembled<T>,
    pub stage: StageCache<T>,
}

pub fn layer_forward<T: Scalar>(
    state_in: &LayerState<T>,
    weights: &LayerWeights<T>,
    cfg: &LayerConfig,
) -> Result<(LayerState<T>, LayerCache<T>)> {
    state_in.validate()?;
    let (h, w, k, _) = state_in.dims();
    if k != cfg.directions.len() {
        return Err(Error::dim("layer_forward directions", &[k], &[cfg.directions.len()]));
    }
    let assembled = assemble(state_in, cfg.use_global)?;
    let (state_out, stage) = lstm_stage(
        &assembled.a,
        h,
        w,
        &state_in.m_spatial,
        &state_in.m_depth,
        weights,
        cfg,
    )?;
    Ok((state_out, LayerCache { assembled, stage }))
}

/// Adjoint of [`layer_forward`].
///
/// `d_state_out` holds cotangents for every field of the output state
/// (`h_in` cotangents are scattered back through the routing transpose).
/// Returns the cotangent of the input state and the weight gradients. In the
/// returned state `h_out` is zero: the layer reads its neighbors only via `h_in`.
pub fn layer_backward<T: Scalar>(
    cache: &LayerCache<T>,
    d_state_out: &LayerState<T>,
    weights: &LayerWeights<T>,
    cfg: &LayerConfig,
) -> Result<(LayerState<T>, LayerWeights<T>)> {
    if cache.stage.mode != cfg.mode || cache.stage.directions != cfg.directions.len() {
        return Err(Error::Contract("layer cache does not match config".into()));
    }
    d_state_out.validate()?;
    let mut d_h_out = d_state_out.h_out.clone();
    accumulate_route_backward(&d_state_out.h_in, &cfg.directions, &mut d_h_out)?;
    let mut grads = weights.zeros_like();
    let stage = lstm_stage_backward(
        &cache.stage,
        weights,
        &d_h_out,
        &d_state_out.h_depth,
        &d_state_out.m_spatial,
        &d_state_out.m_depth,
        &mut grads,
    )?;
    let (h, w, k, d) = d_state_out.dims();
    let mut d_in = LayerState::zeros(h, w, k, d);
    assemble_backward(&stage.d_a, cache.assembled.global.as_ref(), &mut d_in.h_in, &mut d_in.h_depth)?;
    d_in.m_spatial = stage.d_m_spatial;
    d_in.m_depth = stage.d_m_depth;
    Ok((d_in, grads))
}
