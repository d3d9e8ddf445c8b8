#![allow(dead_code)]

use lglstm::layer::LayerWeights;
use lglstm::training::{relative_error, Prng};
use lglstm::Tensor;

pub const EPS: f64 = 1e-5;

/// Step for the fourth-order stencil used on composite functions. At 1e-5
/// the roundoff of a full layer evaluation swamps gradient entries near 1e-5;
/// at 1e-3 the stencil's O(h^4) truncation is still below 1e-11.
pub const WIDE_STEP: f64 = 1e-3;

pub fn rand_tensor(rng: &mut Prng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_range(-scale, scale))
}

pub fn fill(rng: &mut Prng, t: &mut Tensor<f64>, scale: f64) {
    for v in t.data_mut() {
        *v = rng.uniform_range(-scale, scale);
    }
}

pub fn rand_layer_weights(rng: &mut Prng, hidden: usize, input: usize, scale: f64) -> LayerWeights<f64> {
    let mut w = LayerWeights::zeros(hidden, input, true);
    for t in w.ws.tensors_mut().into_iter().chain(w.we.tensors_mut()) {
        fill(rng, t, scale);
    }
    w
}

/// Two-point central difference of `f` with respect to the value `at`
/// addresses, step `EPS`.
pub fn central<S>(state: &mut S, at: impl Fn(&mut S) -> &mut f64, f: impl Fn(&S) -> f64) -> f64 {
    let x0 = *at(state);
    *at(state) = x0 + EPS;
    let up = f(state);
    *at(state) = x0 - EPS;
    let down = f(state);
    *at(state) = x0;
    (up - down) / (2.0 * EPS)
}

/// Fourth-order central difference, step `WIDE_STEP`.
pub fn central4<S>(state: &mut S, at: impl Fn(&mut S) -> &mut f64, f: impl Fn(&S) -> f64) -> f64 {
    let x0 = *at(state);
    let h = WIDE_STEP;
    let mut eval = |dx: f64| {
        *at(state) = x0 + dx;
        f(state)
    };
    let d1 = eval(h) - eval(-h);
    let d2 = eval(2.0 * h) - eval(-2.0 * h);
    *at(state) = x0;
    (8.0 * d1 - d2) / (12.0 * h)
}

/// Checks every coordinate of `analytic` against central differences of
/// `f` over the tensor `at` addresses; returns the worst relative error.
pub fn check_tensor<S>(
    state: &mut S,
    analytic: &Tensor<f64>,
    at: impl Fn(&mut S) -> &mut Tensor<f64>,
    f: impl Fn(&S) -> f64,
) -> f64 {
    check_with(state, analytic, at, f, false)
}

/// As `check_tensor` with the fourth-order stencil.
pub fn check_tensor4<S>(
    state: &mut S,
    analytic: &Tensor<f64>,
    at: impl Fn(&mut S) -> &mut Tensor<f64>,
    f: impl Fn(&S) -> f64,
) -> f64 {
    check_with(state, analytic, at, f, true)
}

fn check_with<S>(
    state: &mut S,
    analytic: &Tensor<f64>,
    at: impl Fn(&mut S) -> &mut Tensor<f64>,
    f: impl Fn(&S) -> f64,
    wide: bool,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let n = if wide {
            central4(state, |s| &mut at(s).data_mut()[i], &f)
        } else {
            central(state, |s| &mut at(s).data_mut()[i], &f)
        };
        worst = worst.max(relative_error(analytic.data()[i], n));
    }
    worst
}

/// `<a, b>` over all elements.
pub fn inner(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}
