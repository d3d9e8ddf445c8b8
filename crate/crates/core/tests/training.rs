use lglstm::dataio::{synth_generate, SegSample};
use lglstm::lstm::HUpdate;
use lglstm::network::{init_model, model_backward, model_forward, Model, ModelConfig};
use lglstm::training::{batch_gradient, train, OptState, SgdConfig, TrainOptions};
use lglstm::{Error, Tensor};

fn small() -> ModelConfig {
    ModelConfig {
        hidden: 4,
        layers: 2,
        stem_channels: vec![4],
        h_update: HUpdate::Standard,
        ..ModelConfig::default()
    }
}

fn run(cfg: &ModelConfig, data: &[SegSample], epochs: usize, seed: u64) -> (Model<f64>, Vec<f64>) {
    let mut model = init_model::<f64>(cfg, seed).unwrap();
    let mut opt = OptState::new(&model, SgdConfig::default());
    let opts = TrainOptions {
        epochs,
        seed: seed + 1,
        eval_every: Some(1),
    };
    let report = train(&mut model, data, &mut opt, &opts).unwrap();
    (model, report.loss_trace)
}

#[test]
fn same_seed_gives_bit_identical_runs() {
    let data = synth_generate(1, 4, 24, 24).unwrap();
    let a = run(&small(), &data, 2, 5);
    let b = run(&small(), &data, 2, 5);
    assert_eq!(a.1.len(), 4);
    assert_eq!(a.0, b.0);
    assert_eq!(
        a.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn zero_epochs_is_a_no_op() {
    let data = synth_generate(1, 2, 24, 24).unwrap();
    let (model, trace) = run(&small(), &data, 0, 9);
    assert!(trace.is_empty());
    assert_eq!(model, init_model::<f64>(&small(), 9).unwrap());
}

#[test]
fn empty_dataset_is_rejected() {
    let mut model = init_model::<f64>(&small(), 0).unwrap();
    let mut opt = OptState::new(&model, SgdConfig::default());
    let opts = TrainOptions {
        epochs: 1,
        seed: 0,
        eval_every: None,
    };
    assert!(matches!(train(&mut model, &[], &mut opt, &opts), Err(Error::Config(_))));
}

#[test]
fn repeated_sample_loss_is_non_increasing_in_most_seeds() {
    let seeds = 20;
    let mut monotone = 0;
    for seed in 0..seeds {
        let data = synth_generate(1000 + seed, 1, 24, 24).unwrap();
        let (_, trace) = run(&small(), &data, 50, seed);
        assert_eq!(trace.len(), 50);
        if trace.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone * 10 >= seeds * 9, "{monotone}/{seeds} seeds monotone");
}

#[test]
fn batch_gradient_is_the_mean_of_sample_gradients() {
    let cfg = small();
    let data = synth_generate(3, 3, 24, 24).unwrap();
    let model = init_model::<f64>(&cfg, 4).unwrap();
    let images: Vec<Tensor<f64>> = data.iter().map(|s| s.image.clone()).collect();
    let batch: Vec<_> = images.iter().zip(&data).collect();
    let (loss, grads) = batch_gradient(&model, &batch).unwrap();

    let mut mean = model.zeros_like();
    let mut mean_loss = 0.0;
    for s in &data {
        let trace = model_forward(&model, &s.image, Some(&s.labels)).unwrap();
        mean_loss += trace.loss.unwrap() / 3.0;
        mean.axpy(1.0 / 3.0, &model_backward(&model, &trace).unwrap()).unwrap();
    }
    assert!((loss - mean_loss).abs() <= 1e-10);
    for (a, b) in grads.tensors().into_iter().zip(mean.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }
}

#[test]
fn narrow_precision_trains_too() {
    let cfg = ModelConfig {
        precision: lglstm::Precision::Narrow,
        ..small()
    };
    let data = synth_generate(2, 2, 24, 24).unwrap();
    let mut model = init_model::<f32>(&cfg, 1).unwrap();
    let mut opt = OptState::new(&model, SgdConfig::default());
    let opts = TrainOptions {
        epochs: 1,
        seed: 2,
        eval_every: Some(1),
    };
    let report = train(&mut model, &data, &mut opt, &opts).unwrap();
    assert!(report.loss_trace.iter().all(|l| l.is_finite()));
    assert_eq!(report.metric_trace.len(), 1);
}
