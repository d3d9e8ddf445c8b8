use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Softmax cross-entropy for one pixel, returning the loss and writing
/// `softmax(logits) - onehot(label)` into `d_logits`.
pub fn softmax_xent_into<T: Scalar>(logits: &[T], label: usize, d_logits: &mut [T]) -> Result<T> {
    let c = logits.len();
    if label >= c {
        return Err(Error::Label { label, classes: c });
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for (g, &l) in d_logits.iter_mut().zip(logits) {
        let e = (l - max).exp();
        *g = e;
        z += e;
    }
    for g in d_logits.iter_mut() {
        *g = *g / z;
    }
    d_logits[label] -= T::one();
    Ok(z.ln() - (logits[label] - max))
}

pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    if logits.rank() != 1 {
        return Err(Error::dim("softmax_xent", logits.shape(), &[logits.len()]));
    }
    let mut d = logits.zeros_like();
    let loss = softmax_xent_into(logits.data(), label, d.data_mut())?;
    Ok((loss, d))
}
