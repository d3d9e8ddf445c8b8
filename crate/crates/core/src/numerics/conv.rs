use rayon::prelude::*;

use super::{kernels, Scalar, Tensor};
use crate::error::{Error, Result};

fn conv_dims<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
    let (h, w, cin) = match input.shape() {
        [h, w, c] => (*h, *w, *c),
        s => return Err(Error::dim("conv2d input", s, &[0, 0, 0])),
    };
    let (cout, k) = match kernel.shape() {
        [co, k1, k2, ci] if k1 == k2 && *ci == cin => (*co, *k1),
        s => return Err(Error::dim("conv2d kernel", s, input.shape())),
    };
    if k != 1 && k != 3 {
        return Err(Error::Config(format!("unsupported kernel size {k}, expected 1 or 3")));
    }
    Ok((h, w, cin, cout, k))
}

/// Stride-1 cross-correlation with zero "same" padding.
///
/// `input: H x W x Cin`, `kernel: Cout x k x k x Cin`, `bias: Cout`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (h, w, cin, cout, k) = conv_dims(input, kernel)?;
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::dim("conv2d bias", b.shape(), &[cout]));
        }
    }
    let pad = (k - 1) / 2;
    let x = input.data();
    let kd = kernel.data();
    let mut out = vec![T::zero(); h * w * cout];
    out.par_chunks_mut(w * cout).enumerate().for_each(|(r, row)| {
        for c in 0..w {
            let o = &mut row[c * cout..(c + 1) * cout];
            if let Some(b) = bias {
                o.copy_from_slice(b.data());
            }
            for ky in 0..k {
                let Some(rr) = (r + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(cc) = (c + kx).checked_sub(pad).filter(|&v| v < w) else {
                        continue;
                    };
                    let xin = &x[(rr * w + cc) * cin..(rr * w + cc + 1) * cin];
                    for (co, oc) in o.iter_mut().enumerate() {
                        let base = ((co * k + ky) * k + kx) * cin;
                        *oc += kernels::dot(&kd[base..base + cin], xin);
                    }
                }
            }
        }
    });
    Tensor::new(&[h, w, cout], out)
}

/// Backward of [`conv2d`]. Kernel and bias gradients are accumulated into
/// `d_kernel` / `d_bias`; the input gradient is returned.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    d_out: &Tensor<T>,
    d_kernel: &mut Tensor<T>,
    d_bias: Option<&mut Tensor<T>>,
) -> Result<Tensor<T>> {
    let (h, w, cin, cout, k) = conv_dims(input, kernel)?;
    if d_out.shape() != [h, w, cout] {
        return Err(Error::dim("conv2d_backward", d_out.shape(), &[h, w, cout]));
    }
    kernel.same_shape(d_kernel, "conv2d_backward kernel")?;
    let pad = (k - 1) / 2;
    let x = input.data();
    let g = d_out.data();
    let kd = kernel.data();

    if let Some(db) = d_bias {
        if db.shape() != [cout] {
            return Err(Error::dim("conv2d_backward bias", db.shape(), &[cout]));
        }
        let db = db.data_mut();
        for p in 0..h * w {
            for co in 0..cout {
                db[co] += g[p * cout + co];
            }
        }
    }

    // Kernel gradient: one output channel per task, positions summed in order.
    d_kernel
        .data_mut()
        .par_chunks_mut(k * k * cin)
        .enumerate()
        .for_each(|(co, dk)| {
            for r in 0..h {
                for c in 0..w {
                    let gv = g[(r * w + c) * cout + co];
                    if gv == T::zero() {
                        continue;
                    }
                    for ky in 0..k {
                        let Some(rr) = (r + ky).checked_sub(pad).filter(|&v| v < h) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(cc) = (c + kx).checked_sub(pad).filter(|&v| v < w) else {
                                continue;
                            };
                            let xin = &x[(rr * w + cc) * cin..(rr * w + cc + 1) * cin];
                            let base = (ky * k + kx) * cin;
                            kernels::axpy(gv, xin, &mut dk[base..base + cin]);
                        }
                    }
                }
            }
        });

    // Input gradient gathered per input position.
    let mut dx = vec![T::zero(); h * w * cin];
    dx.par_chunks_mut(w * cin).enumerate().for_each(|(rr, row)| {
        for cc in 0..w {
            let acc = &mut row[cc * cin..(cc + 1) * cin];
            for ky in 0..k {
                // rr = r + ky - pad
                let Some(r) = (rr + pad).checked_sub(ky).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(c) = (cc + pad).checked_sub(kx).filter(|&v| v < w) else {
                        continue;
                    };
                    let go = &g[(r * w + c) * cout..(r * w + c + 1) * cout];
                    for (co, &gv) in go.iter().enumerate() {
                        if gv != T::zero() {
                            let base = ((co * k + ky) * k + kx) * cin;
                            kernels::axpy(gv, &kd[base..base + cin], acc);
                        }
                    }
                }
            }
        }
    });
    Tensor::new(&[h, w, cin], dx)
}
