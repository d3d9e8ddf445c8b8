//! Dense tensors and the differentiable primitives everything else is built from.

mod conv;
pub mod kernels;
mod loss;
mod ops;
mod pool;
mod scalar;
mod tensor;

pub use conv::{conv2d, conv2d_backward};
pub use loss::{softmax_xent, softmax_xent_into};
pub use ops::{
    hadamard, hadamard_backward, matmul, matmul_backward, pointwise, pointwise_backward, sigmoid,
    Activation,
};
pub use pool::{grid_bounds, grid_max_pool, grid_max_pool_backward, PoolIndexMap};
pub(crate) use pool::accumulate_pool_backward;
pub use scalar::{Precision, Scalar};
pub use tensor::Tensor;
