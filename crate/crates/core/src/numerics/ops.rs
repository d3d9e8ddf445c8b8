//! Elementwise and matrix-vector primitives, each paired with its backward rule.

use super::{kernels, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the forward output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// `W . x` for `W: m x n`, `x: n`.
pub fn matmul<T: Scalar>(w: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = matvec_dims(w, x)?;
    let mut out = vec![T::zero(); m];
    kernels::gemm_nt(x.data(), w.data(), n, &mut out);
    Tensor::new(&[m], out)
}

/// Adjoints of [`matmul`]: `(dOut ⊗ x, Wᵀ dOut)`.
pub fn matmul_backward<T: Scalar>(
    w: &Tensor<T>,
    x: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, n) = matvec_dims(w, x)?;
    if d_out.shape() != [m] {
        return Err(Error::dim("matmul_backward", &[m], d_out.shape()));
    }
    let mut dw = Tensor::zeros(&[m, n]);
    kernels::gemm_tn_acc(d_out.data(), x.data(), m, dw.data_mut());
    let mut dx = Tensor::zeros(&[n]);
    kernels::gemm_nn_acc(d_out.data(), w.data(), m, dx.data_mut());
    Ok((dw, dx))
}

fn matvec_dims<T: Scalar>(w: &Tensor<T>, x: &Tensor<T>) -> Result<(usize, usize)> {
    match (w.shape(), x.shape()) {
        ([m, n], [k]) if n == k => Ok((*m, *n)),
        _ => Err(Error::dim("matmul", w.shape(), x.shape())),
    }
}

pub fn pointwise<T: Scalar>(kind: Activation, x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| kind.apply(v))
}

/// Backward of [`pointwise`] given its cached output `y`.
pub fn pointwise_backward<T: Scalar>(
    kind: Activation,
    y: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    y.same_shape(d_out, "pointwise_backward")?;
    let data = y
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&yi, &gi)| gi * kind.derivative_from_output(yi))
        .collect();
    Tensor::new(y.shape(), data)
}

pub fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.same_shape(b, "hadamard")?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::new(a.shape(), data)
}

pub fn hadamard_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    a.same_shape(d_out, "hadamard_backward")?;
    Ok((hadamard(d_out, b)?, hadamard(d_out, a)?))
}
