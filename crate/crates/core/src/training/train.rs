use rayon::prelude::*;

use super::{sgd_step, OptState, Prng};
use crate::dataio::{evaluate, MetricsReport, SegSample};
use crate::error::{Error, Result};
use crate::network::{model_backward, model_forward, predict, Gradients, Model};
use crate::numerics::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
    /// Evaluate on the training set every this many epochs (and after the last one).
    pub eval_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean total loss of every optimizer step, in order.
    pub loss_trace: Vec<f64>,
    /// `(epoch, metrics)` pairs, epochs counted from 1.
    pub metric_trace: Vec<(usize, MetricsReport)>,
}

/// Progress passed to the [`train_with`] callback after every step.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

/// Mean loss and mean gradient over a batch.
///
/// Samples run in parallel; their gradients are summed in batch order.
pub fn batch_gradient<T: Scalar>(model: &Model<T>, batch: &[(&Tensor<T>, &SegSample)]) -> Result<(f64, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let per_sample: Vec<Result<(T, Gradients<T>)>> = batch
        .par_iter()
        .map(|(image, sample)| {
            let trace = model_forward(model, image, Some(&sample.labels))?;
            let grads = model_backward(model, &trace)?;
            Ok((trace.loss.expect("labels given"), grads))
        })
        .collect();
    let mut total = T::zero();
    let mut acc: Option<Gradients<T>> = None;
    for r in per_sample {
        let (loss, g) = r?;
        total += loss;
        match &mut acc {
            None => acc = Some(g),
            Some(a) => a.axpy(T::one(), &g)?,
        }
    }
    let mut grads = acc.expect("nonempty batch");
    let inv = T::one() / T::lit(batch.len() as f64);
    grads.scale(inv);
    Ok(((total * inv).to_f64_lossy(), grads))
}

pub fn train<T: Scalar>(
    model: &mut Model<T>,
    dataset: &[SegSample],
    opt: &mut OptState<T>,
    options: &TrainOptions,
) -> Result<TrainReport> {
    train_with(model, dataset, opt, options, |_| {})
}

/// [`train`] with a callback invoked after every optimizer step.
pub fn train_with<T: Scalar>(
    model: &mut Model<T>,
    dataset: &[SegSample],
    opt: &mut OptState<T>,
    options: &TrainOptions,
    mut on_step: impl FnMut(StepInfo),
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if opt.hyper.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let images: Vec<Tensor<T>> = dataset.iter().map(|s| s.image.cast()).collect();
    let mut rng = Prng::new(options.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport {
        loss_trace: Vec::new(),
        metric_trace: Vec::new(),
    };
    for epoch in 1..=options.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(opt.hyper.batch_size) {
            let batch: Vec<(&Tensor<T>, &SegSample)> = chunk.iter().map(|&i| (&images[i], &dataset[i])).collect();
            let (loss, grads) = batch_gradient(model, &batch)?;
            sgd_step(model, &grads, opt)?;
            report.loss_trace.push(loss);
            on_step(StepInfo {
                epoch,
                step: report.loss_trace.len(),
                loss,
            });
        }
        if let Some(every) = options.eval_every.filter(|&e| e > 0) {
            if epoch % every == 0 || epoch == options.epochs {
                report.metric_trace.push((epoch, evaluate_model(model, dataset)?));
            }
        }
    }
    Ok(report)
}

/// Predicts every sample and scores the predictions against its labels.
pub fn evaluate_model<T: Scalar>(model: &Model<T>, dataset: &[SegSample]) -> Result<MetricsReport> {
    let preds: Vec<_> = dataset
        .par_iter()
        .map(|s| predict(model, &s.image.cast()))
        .collect::<Result<_>>()?;
    let gts: Vec<_> = dataset.iter().map(|s| s.labels.clone()).collect();
    evaluate(&preds, &gts, model.config.classes)
}
