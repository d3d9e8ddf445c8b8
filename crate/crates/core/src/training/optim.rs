use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Gradients, Model, ParamKind};
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 2,
        }
    }
}

/// Momentum buffers, one per parameter tensor, plus the hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<T> {
    pub hyper: SgdConfig,
    pub velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> OptState<T> {
    pub fn new(model: &Model<T>, hyper: SgdConfig) -> Self {
        Self {
            hyper,
            velocity: model.tensors().into_iter().map(Tensor::zeros_like).collect(),
        }
    }
}

/// One momentum-SGD update of a single tensor:
/// `v <- momentum·v + g + wd·p` (wd only for weights), `p <- p - lr·v`.
pub fn sgd_update<T: Scalar>(param: &mut Tensor<T>, grad: &Tensor<T>, velocity: &mut Tensor<T>, kind: ParamKind, hyper: &SgdConfig) -> Result<()> {
    param.same_shape(grad, "sgd_step")?;
    param.same_shape(velocity, "sgd_step velocity")?;
    let lr = T::lit(hyper.lr);
    let mom = T::lit(hyper.momentum);
    let wd = match kind {
        ParamKind::Weight => T::lit(hyper.weight_decay),
        ParamKind::Bias => T::zero(),
    };
    for ((p, &g), v) in param.data_mut().iter_mut().zip(grad.data()).zip(velocity.data_mut()) {
        *v = mom * *v + g + wd * *p;
        *p -= lr * *v;
    }
    Ok(())
}

pub fn sgd_step<T: Scalar>(model: &mut Model<T>, grads: &Gradients<T>, opt: &mut OptState<T>) -> Result<()> {
    let hyper = opt.hyper;
    let grads = grads.tensors();
    let params = model.params_mut();
    if params.len() != grads.len() || params.len() != opt.velocity.len() {
        return Err(Error::dim("sgd_step", &[params.len()], &[grads.len(), opt.velocity.len()]));
    }
    for (((kind, p), g), v) in params.into_iter().zip(grads).zip(opt.velocity.iter_mut()) {
        sgd_update(p, g, v, kind, &hyper)?;
    }
    Ok(())
}
