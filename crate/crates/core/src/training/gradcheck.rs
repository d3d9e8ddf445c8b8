//! Central-difference verification of the hand-written backward passes.

use serde::{Deserialize, Serialize};

use super::Prng;
use crate::dataio::LabelMap;
use crate::error::{Error, Result};
use crate::network::{model_backward, model_forward, Model, ModelConfig};
use crate::numerics::{Precision, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckOptions {
    pub height: usize,
    pub width: usize,
    pub n_coords: usize,
    pub eps: f64,
    pub tol: f64,
    pub seed: u64,
    /// Parameters are drawn from `U(-param_scale, param_scale)`.
    pub param_scale: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            height: 6,
            width: 6,
            n_coords: 200,
            eps: 1e-5,
            tol: 1e-5,
            seed: 0,
            param_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }

    pub fn worst(&self) -> Option<&CoordCheck> {
        self.checks.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Picks `n` (tensor, flat index) coordinates, cycling through the tensors so
/// every parameter tensor is visited.
pub fn sample_coords(model: &Model<f64>, n: usize, rng: &mut Prng) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    (0..n)
        .map(|i| {
            let t = i % sizes.len();
            (t, rng.below(sizes[t]))
        })
        .collect()
}

/// Compares the analytic gradient of the total loss to central differences
/// at the given coordinates.
pub fn check_coords(
    model: &Model<f64>,
    image: &Tensor<f64>,
    labels: &LabelMap,
    coords: &[(usize, usize)],
    eps: f64,
) -> Result<Vec<CoordCheck>> {
    let trace = model_forward(model, image, Some(labels))?;
    let grads = model_backward(model, &trace)?;
    let grad_tensors = grads.tensors();
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _, _)| n).collect();
    let mut probe = model.clone();
    let mut loss_at = |t: usize, i: usize, value: f64| -> Result<f64> {
        let original = {
            let mut params = probe.params_mut();
            let slot = &mut params[t].1.data_mut()[i];
            std::mem::replace(slot, value)
        };
        let loss = model_forward(&probe, image, Some(labels))?.loss.expect("labels given");
        probe.params_mut()[t].1.data_mut()[i] = original;
        Ok(loss)
    };
    let params = model.tensors();
    coords
        .iter()
        .map(|&(t, i)| {
            let x = params[t].data()[i];
            let numeric = (loss_at(t, i, x + eps)? - loss_at(t, i, x - eps)?) / (2.0 * eps);
            let analytic = grad_tensors[t].data()[i];
            Ok(CoordCheck {
                name: names[t].clone(),
                index: i,
                analytic,
                numeric,
                rel_err: relative_error(analytic, numeric),
            })
        })
        .collect()
}

/// Builds a small random model and sample for `config` and checks
/// `opts.n_coords` parameter coordinates. Requires wide precision.
pub fn grad_check(config: &ModelConfig, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    if config.precision != Precision::Wide {
        return Err(Error::Config("gradient checking requires wide precision".into()));
    }
    let mut rng = Prng::new(opts.seed);
    let mut model = Model::<f64>::zeros(config)?;
    for (_, t) in model.params_mut() {
        for v in t.data_mut() {
            *v = rng.uniform_range(-opts.param_scale, opts.param_scale);
        }
    }
    let (h, w) = (opts.height, opts.width);
    let image = Tensor::from_fn(&[h, w, config.in_channels], |_| rng.uniform());
    let labels = LabelMap::new(h, w, (0..h * w).map(|_| rng.below(config.classes)).collect())?;
    let coords = sample_coords(&model, opts.n_coords, &mut rng);
    let checks = check_coords(&model, &image, &labels, &coords, opts.eps)?;
    let max_rel_err = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport {
        checks,
        max_rel_err,
        tol: opts.tol,
    })
}
