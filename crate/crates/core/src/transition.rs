//! Adapter from convolutional features to the first layer state.
//!
//! Each position feeds its feature vector to K spatial LSTMs (one shared
//! weight set) and one depth LSTM, all starting from zero memory.

use crate::error::{Error, Result};
use crate::layer::{lstm_stage, lstm_stage_backward, LayerConfig, LayerState, LayerWeights, StageCache};
use crate::numerics::{Scalar, Tensor};

/// Transition weights. Their input size is the stem channel count, so they
/// are never shared with the stacked layers.
pub type TransitionWeights<T> = LayerWeights<T>;

#[derive(Debug, Clone)]
pub struct TransitionCache<T> {
    pub stage: StageCache<T>,
    pub feature_shape: Vec<usize>,
}

pub fn transition_forward<T: Scalar>(
    features: &Tensor<T>,
    weights: &TransitionWeights<T>,
    cfg: &LayerConfig,
) -> Result<(LayerState<T>, TransitionCache<T>)> {
    let (h, w, c) = match features.shape() {
        [h, w, c] => (*h, *w, *c),
        s => return Err(Error::dim("transition_forward", s, &[0, 0, weights.input()])),
    };
    if c != weights.input() {
        return Err(Error::dim("transition_forward channels", &[c], &[weights.input()]));
    }
    let k = cfg.directions.len();
    let d = weights.hidden();
    let a = features.clone().reshape(&[h * w, c])?;
    let m_spatial = Tensor::zeros(&[h, w, k, d]);
    let m_depth = Tensor::zeros(&[h, w, d]);
    let (state, stage) = lstm_stage(&a, h, w, &m_spatial, &m_depth, weights, cfg)?;
    Ok((
        state,
        TransitionCache {
            stage,
            feature_shape: features.shape().to_vec(),
        },
    ))
}

/// Adjoint of [`transition_forward`]; returns `(dFeatures, dWeights)`.
///
/// Only the `h_in`, `h_out`, `h_depth`, `m_spatial` and `m_depth` cotangents of
/// the produced state matter; the zero initial memories receive no gradient.
pub fn transition_backward<T: Scalar>(
    cache: &TransitionCache<T>,
    d_state: &LayerState<T>,
    weights: &TransitionWeights<T>,
    cfg: &LayerConfig,
) -> Result<(Tensor<T>, TransitionWeights<T>)> {
    let mut grads = weights.zeros_like();
    let d_features = transition_backward_acc(cache, d_state, weights, cfg, &mut grads)?;
    Ok((d_features, grads))
}

pub(crate) fn transition_backward_acc<T: Scalar>(
    cache: &TransitionCache<T>,
    d_state: &LayerState<T>,
    weights: &TransitionWeights<T>,
    cfg: &LayerConfig,
    grads: &mut TransitionWeights<T>,
) -> Result<Tensor<T>> {
    if cache.stage.mode != cfg.mode || cache.stage.directions != cfg.directions.len() {
        return Err(Error::Contract("transition cache does not match config".into()));
    }
    d_state.validate()?;
    let mut d_h_out = d_state.h_out.clone();
    crate::layer::accumulate_route_backward(&d_state.h_in, &cfg.directions, &mut d_h_out)?;
    let g = lstm_stage_backward(
        &cache.stage,
        weights,
        &d_h_out,
        &d_state.h_depth,
        &d_state.m_spatial,
        &d_state.m_depth,
        grads,
    )?;
    g.d_a.reshape(&cache.feature_shape)
}
