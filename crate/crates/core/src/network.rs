//! Full model: convolutional stem, transition layer, a stack of local-global
//! layers sharing one weight pair, and a 1x1 classifier head after every
//! layer. Each head gets its own cross-entropy loss (deep supervision) and the
//! total loss is their weighted sum.

use serde::{Deserialize, Serialize};

use crate::dataio::LabelMap;
use crate::error::{Error, Result};
use crate::layer::{
    assemble, assemble_backward, input_size, lstm_stage, lstm_stage_backward, route_hidden_backward, Assembled,
    DirectionSet, LayerConfig, LayerState, LayerWeights, StageCache,
};
use crate::lstm::HUpdate;
use crate::numerics::{conv2d, conv2d_backward, kernels, softmax_xent_into, Precision, Scalar, Tensor};
use crate::training::Prng;
use crate::transition::{transition_backward_acc, transition_forward, TransitionCache};

/// Standard deviation of the Gaussian used for convolution kernels.
pub const CONV_INIT_STD: f64 = 0.001;
/// Half-width of the uniform distribution used for LSTM gate weights.
pub const LSTM_INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden size `d` of every LSTM.
    #[serde(rename = "d")]
    pub hidden: usize,
    /// Number of stacked local-global layers `L`.
    pub layers: usize,
    /// Number of classes `C`, background included.
    pub classes: usize,
    /// Number of spatial directions `K` (2, 4 or 8).
    pub directions: usize,
    pub use_global: bool,
    pub h_update: HUpdate,
    pub biases: bool,
    /// Output channels of the 3x3 conv + relu stem layers.
    pub stem_channels: Vec<usize>,
    pub in_channels: usize,
    pub precision: Precision,
    pub conv_init: ConvInit,
}

/// How convolution kernels (stem and heads) are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvInit {
    /// `N(0, 0.001²)` for every kernel. Suited to fine-tuning on top of a
    /// pretrained stem; from scratch the tiny heads and stem attenuate
    /// gradients by orders of magnitude.
    #[default]
    Small,
    /// Fan-in scaling: `N(0, 2 / fan_in)` for the relu stem and
    /// `N(0, 1 / fan_in)` for the linear heads.
    FanIn,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 5,
            classes: crate::dataio::SYNTH_CLASSES,
            directions: 8,
            use_global: true,
            h_update: HUpdate::StrictPaper,
            biases: true,
            stem_channels: vec![32, 32],
            in_channels: 1,
            precision: Precision::Wide,
            conv_init: ConvInit::Small,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers < 1 {
            return bad(format!("layers must be >= 1, got {}", self.layers));
        }
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.hidden < 1 {
            return bad("hidden size must be >= 1".into());
        }
        if self.in_channels < 1 || self.stem_channels.contains(&0) {
            return bad("channel counts must be >= 1".into());
        }
        DirectionSet::from_count(self.directions)?;
        Ok(())
    }

    pub fn layer_config(&self) -> Result<LayerConfig> {
        Ok(LayerConfig {
            directions: DirectionSet::from_count(self.directions)?,
            use_global: self.use_global,
            mode: self.h_update,
        })
    }

    /// Length of the assembled input state `(G + K + 1)·d`.
    pub fn input_size(&self) -> usize {
        input_size(self.hidden, self.directions, self.use_global)
    }

    /// Channel count of the stem output, i.e. the transition input size.
    pub fn feature_channels(&self) -> usize {
        self.stem_channels.last().copied().unwrap_or(self.in_channels)
    }

    /// Closed-form count of trainable scalars.
    pub fn param_count(&self) -> usize {
        let b = usize::from(self.biases);
        let mut cin = self.in_channels;
        let mut stem = 0;
        for &c in &self.stem_channels {
            stem += 9 * cin * c + b * c;
            cin = c;
        }
        let d = self.hidden;
        let transition = 2 * 4 * (d * cin + b * d);
        let shared = 2 * 4 * (d * self.input_size() + b * d);
        let heads = self.layers * (self.classes * self.input_size() + b * self.classes);
        stem + transition + shared + heads
    }
}

/// A convolution kernel `Cout x k x k x Cin` with optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub kernel: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> ConvParams<T> {
    fn zeros(cout: usize, k: usize, cin: usize, bias: bool) -> Self {
        Self {
            kernel: Tensor::zeros(&[cout, k, k, cin]),
            bias: bias.then(|| Tensor::zeros(&[cout])),
        }
    }
}

/// Whether weight decay applies to a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub stem: Vec<ConvParams<T>>,
    pub transition: LayerWeights<T>,
    /// The single spatial/depth weight pair shared by every stacked layer.
    pub lstm: LayerWeights<T>,
    pub heads: Vec<ConvParams<T>>,
}

/// Gradients share the layout of the model.
pub type Gradients<T> = Model<T>;

const GATE_NAMES: [&str; 4] = ["u", "f", "o", "c"];

impl<T: Scalar> Model<T> {
    /// All-zero model for `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let b = config.biases;
        let mut stem = Vec::with_capacity(config.stem_channels.len());
        let mut cin = config.in_channels;
        for &c in &config.stem_channels {
            stem.push(ConvParams::zeros(c, 3, cin, b));
            cin = c;
        }
        let d = config.hidden;
        let input = config.input_size();
        Ok(Self {
            config: config.clone(),
            stem,
            transition: LayerWeights::zeros(d, cin, b),
            lstm: LayerWeights::zeros(d, input, b),
            heads: (0..config.layers)
                .map(|_| ConvParams::zeros(config.classes, 1, input, b))
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config was validated at construction")
    }

    /// Parameter tensors in checkpoint order with their names and kinds.
    pub fn named_params(&self) -> Vec<(String, ParamKind, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, s) in self.stem.iter().enumerate() {
            out.push((format!("stem.{i}.kernel"), ParamKind::Weight, &s.kernel));
            if let Some(b) = &s.bias {
                out.push((format!("stem.{i}.bias"), ParamKind::Bias, b));
            }
        }
        for (prefix, lw) in [("transition", &self.transition), ("lglstm", &self.lstm)] {
            for (tag, gw) in [("ws", &lw.ws), ("we", &lw.we)] {
                for (g, w) in gw.w.iter().enumerate() {
                    out.push((format!("{prefix}.{tag}.w{}", GATE_NAMES[g]), ParamKind::Weight, w));
                }
                if let Some(b) = &gw.b {
                    for (g, b) in b.iter().enumerate() {
                        out.push((format!("{prefix}.{tag}.b{}", GATE_NAMES[g]), ParamKind::Bias, b));
                    }
                }
            }
        }
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("head.{i}.kernel"), ParamKind::Weight, &h.kernel));
            if let Some(b) = &h.bias {
                out.push((format!("head.{i}.bias"), ParamKind::Bias, b));
            }
        }
        out
    }

    /// Mutable parameter tensors, same order as [`Model::named_params`].
    pub fn params_mut(&mut self) -> Vec<(ParamKind, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for s in &mut self.stem {
            out.push((ParamKind::Weight, &mut s.kernel));
            if let Some(b) = &mut s.bias {
                out.push((ParamKind::Bias, b));
            }
        }
        for lw in [&mut self.transition, &mut self.lstm] {
            for gw in [&mut lw.ws, &mut lw.we] {
                for w in gw.w.iter_mut() {
                    out.push((ParamKind::Weight, w));
                }
                if let Some(b) = &mut gw.b {
                    for b in b.iter_mut() {
                        out.push((ParamKind::Bias, b));
                    }
                }
            }
        }
        for h in &mut self.heads {
            out.push((ParamKind::Weight, &mut h.kernel));
            if let Some(b) = &mut h.bias {
                out.push((ParamKind::Bias, b));
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_params().into_iter().map(|(_, _, t)| t).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Adds `alpha * other` parameter-wise.
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        let src = other.tensors();
        let dst = self.params_mut();
        if src.len() != dst.len() {
            return Err(Error::Contract("model layouts differ".into()));
        }
        for ((_, d), s) in dst.into_iter().zip(src) {
            d.axpy(alpha, s)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: T) {
        for (_, t) in self.params_mut() {
            t.scale(alpha);
        }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let mut out = Model::<U>::zeros(&self.config).expect("validated config");
        for ((_, d), s) in out.params_mut().into_iter().zip(self.tensors()) {
            *d = s.cast();
        }
        out.config.precision = U::PRECISION;
        out
    }
}

/// Draws a fresh model: LSTM gate weights from `U(-0.1, 0.1)`, convolution
/// kernels from `N(0, 0.001²)` (or per [`ConvInit`]), biases zero. Tensors are filled in
/// [`Model::named_params`] order from one SplitMix64 stream.
pub fn init_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    let mut model = Model::<T>::zeros(config)?;
    let mut rng = Prng::new(seed);
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _, _)| n).collect();
    for (name, (kind, t)) in names.iter().zip(model.params_mut()) {
        if kind == ParamKind::Bias {
            continue;
        }
        let fan_in = (t.len() / t.shape()[0]) as f64;
        let gain = if name.starts_with("stem.") {
            Some(2.0)
        } else if name.starts_with("head.") {
            Some(1.0)
        } else {
            None
        };
        let std = gain.map(|g| match config.conv_init {
            ConvInit::Small => CONV_INIT_STD,
            ConvInit::FanIn => (g / fan_in).sqrt(),
        });
        for v in t.data_mut() {
            *v = T::lit(if let Some(std) = std {
                std * rng.normal()
            } else {
                rng.uniform_range(-LSTM_INIT_RANGE, LSTM_INIT_RANGE)
            });
        }
    }
    Ok(model)
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub height: usize,
    pub width: usize,
    /// Input of every stem convolution.
    stem_inputs: Vec<Tensor<T>>,
    /// Post-relu output of every stem convolution.
    stem_outputs: Vec<Tensor<T>>,
    transition: TransitionCache<T>,
    stages: Vec<StageCache<T>>,
    /// Assembled input states of the transition output and of every layer output.
    assembled: Vec<Assembled<T>>,
    /// Per-layer logits, `H x W x C` each.
    pub logits: Vec<Tensor<T>>,
    pub labels: Option<LabelMap>,
    /// Mean pixel cross-entropy of every head.
    pub layer_losses: Vec<T>,
    pub loss_weights: Vec<T>,
    /// Weighted sum of `layer_losses`.
    pub loss: Option<T>,
    /// `softmax - onehot` of every head, unscaled.
    residuals: Vec<Tensor<T>>,
}

impl<T> ForwardTrace<T> {
    pub fn last_logits(&self) -> &Tensor<T> {
        self.logits.last().expect("at least one layer")
    }
}

fn head_forward<T: Scalar>(a: &Tensor<T>, head: &ConvParams<T>, classes: usize) -> Vec<T> {
    let (p_count, inner) = (a.shape()[0], a.shape()[1]);
    let mut out = vec![T::zero(); p_count * classes];
    kernels::gemm_nt(a.data(), head.kernel.data(), inner, &mut out);
    if let Some(b) = &head.bias {
        for row in out.chunks_mut(classes) {
            kernels::axpy(T::one(), b.data(), row);
        }
    }
    out
}

fn head_backward<T: Scalar>(
    a: &Tensor<T>,
    head: &ConvParams<T>,
    d_logits: &[T],
    grad: &mut ConvParams<T>,
    d_a: &mut [T],
) {
    let classes = head.kernel.shape()[0];
    kernels::gemm_nn_acc(d_logits, head.kernel.data(), classes, d_a);
    kernels::gemm_tn_acc(d_logits, a.data(), classes, grad.kernel.data_mut());
    if let Some(db) = &mut grad.bias {
        for row in d_logits.chunks(classes) {
            kernels::axpy(T::one(), row, db.data_mut());
        }
    }
}

pub fn model_forward<T: Scalar>(
    model: &Model<T>,
    image: &Tensor<T>,
    labels: Option<&LabelMap>,
) -> Result<ForwardTrace<T>> {
    let weights = vec![T::one(); model.config.layers];
    model_forward_weighted(model, image, labels, &weights)
}

/// Forward pass with an explicit per-layer loss weight.
pub fn model_forward_weighted<T: Scalar>(
    model: &Model<T>,
    image: &Tensor<T>,
    labels: Option<&LabelMap>,
    loss_weights: &[T],
) -> Result<ForwardTrace<T>> {
    let cfg = &model.config;
    let (h, w) = match image.shape() {
        [h, w, c] if *c == cfg.in_channels => (*h, *w),
        s => return Err(Error::dim("model_forward image", s, &[0, 0, cfg.in_channels])),
    };
    if cfg.use_global && (h < 3 || w < 3) {
        return Err(Error::InputTooSmall { height: h, width: w });
    }
    if loss_weights.len() != cfg.layers {
        return Err(Error::dim("model_forward loss weights", &[loss_weights.len()], &[cfg.layers]));
    }
    if let Some(l) = labels {
        if (l.height, l.width) != (h, w) {
            return Err(Error::dim("model_forward labels", &[l.height, l.width], &[h, w]));
        }
        l.check_classes(cfg.classes)?;
    }
    let layer_cfg = cfg.layer_config()?;

    let mut stem_inputs = Vec::with_capacity(model.stem.len());
    let mut stem_outputs = Vec::with_capacity(model.stem.len());
    let mut x = image.clone();
    for conv in &model.stem {
        let mut y = conv2d(&x, &conv.kernel, conv.bias.as_ref())?;
        y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        stem_inputs.push(std::mem::replace(&mut x, y.clone()));
        stem_outputs.push(y);
    }

    let (mut state, transition) = transition_forward(&x, &model.transition, &layer_cfg)?;
    let mut assembled = vec![assemble(&state, cfg.use_global)?];
    let mut stages = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        let a_prev = assembled.last().expect("nonempty");
        let (next, stage) = lstm_stage(&a_prev.a, h, w, &state.m_spatial, &state.m_depth, &model.lstm, &layer_cfg)?;
        assembled.push(assemble(&next, cfg.use_global)?);
        stages.push(stage);
        state = next;
    }

    let classes = cfg.classes;
    let p_count = h * w;
    let mut logits = Vec::with_capacity(cfg.layers);
    let mut residuals = Vec::new();
    let mut layer_losses = Vec::new();
    for (i, head) in model.heads.iter().enumerate() {
        let out = head_forward(&assembled[i + 1].a, head, classes);
        if let Some(l) = labels {
            let mut res = vec![T::zero(); out.len()];
            let mut total = T::zero();
            for p in 0..p_count {
                let r = p * classes..(p + 1) * classes;
                total += softmax_xent_into(&out[r.clone()], l.labels[p], &mut res[r])?;
            }
            layer_losses.push(total / T::lit(p_count as f64));
            residuals.push(Tensor::new(&[h, w, classes], res)?);
        }
        logits.push(Tensor::new(&[h, w, classes], out)?);
    }
    let loss = labels.map(|_| {
        layer_losses
            .iter()
            .zip(loss_weights)
            .fold(T::zero(), |acc, (&l, &wt)| acc + wt * l)
    });
    Ok(ForwardTrace {
        height: h,
        width: w,
        stem_inputs,
        stem_outputs,
        transition,
        stages,
        assembled,
        logits,
        labels: labels.cloned(),
        layer_losses,
        loss_weights: loss_weights.to_vec(),
        loss,
        residuals,
    })
}

/// Exact gradient of the total loss of `trace` with respect to every parameter.
pub fn model_backward<T: Scalar>(model: &Model<T>, trace: &ForwardTrace<T>) -> Result<Gradients<T>> {
    if trace.labels.is_none() || trace.residuals.len() != model.config.layers {
        return Err(Error::Contract("model_backward needs a trace computed with labels".into()));
    }
    let cfg = &model.config;
    let layer_cfg = cfg.layer_config()?;
    let (h, w) = (trace.height, trace.width);
    let (k, d) = (cfg.directions, cfg.hidden);
    let p_count = h * w;
    let inner = cfg.input_size();
    let mut grads = model.zeros_like();

    let mut d_a_next: Option<Tensor<T>> = None;
    let mut dm_s = Tensor::zeros(&[h, w, k, d]);
    let mut dm_e = Tensor::zeros(&[h, w, d]);
    for i in (1..=cfg.layers).rev() {
        let scale = trace.loss_weights[i - 1] / T::lit(p_count as f64);
        let d_logits: Vec<T> = trace.residuals[i - 1].data().iter().map(|&v| v * scale).collect();
        let mut d_a = d_a_next.take().unwrap_or_else(|| Tensor::zeros(&[p_count, inner]));
        head_backward(
            &trace.assembled[i].a,
            &model.heads[i - 1],
            &d_logits,
            &mut grads.heads[i - 1],
            d_a.data_mut(),
        );
        let mut dh_in = Tensor::zeros(&[h, w, k, d]);
        let mut dh_depth = Tensor::zeros(&[h, w, d]);
        assemble_backward(&d_a, trace.assembled[i].global.as_ref(), &mut dh_in, &mut dh_depth)?;
        let dh_out = route_hidden_backward(&dh_in, &layer_cfg.directions)?;
        let g = lstm_stage_backward(
            &trace.stages[i - 1],
            &model.lstm,
            &dh_out,
            &dh_depth,
            &dm_s,
            &dm_e,
            &mut grads.lstm,
        )?;
        d_a_next = Some(g.d_a);
        dm_s = g.d_m_spatial;
        dm_e = g.d_m_depth;
    }

    let mut d_state0 = LayerState::zeros(h, w, k, d);
    let d_a0 = d_a_next.expect("at least one layer");
    assemble_backward(&d_a0, trace.assembled[0].global.as_ref(), &mut d_state0.h_in, &mut d_state0.h_depth)?;
    d_state0.m_spatial = dm_s;
    d_state0.m_depth = dm_e;
    let mut d_x = transition_backward_acc(
        &trace.transition,
        &d_state0,
        &model.transition,
        &layer_cfg,
        &mut grads.transition,
    )?;

    for l in (0..model.stem.len()).rev() {
        let out = &trace.stem_outputs[l];
        for (g, &y) in d_x.data_mut().iter_mut().zip(out.data()) {
            if y <= T::zero() {
                *g = T::zero();
            }
        }
        let conv = &model.stem[l];
        let gconv = &mut grads.stem[l];
        d_x = conv2d_backward(&trace.stem_inputs[l], &conv.kernel, &d_x, &mut gconv.kernel, gconv.bias.as_mut())?;
    }
    Ok(grads)
}

/// Per-pixel argmax of the last head; ties go to the smallest class index.
pub fn predict<T: Scalar>(model: &Model<T>, image: &Tensor<T>) -> Result<LabelMap> {
    let trace = model_forward(model, image, None)?;
    Ok(argmax_labels(trace.last_logits()))
}

/// Per-pixel argmax of an `H x W x C` logit map.
pub fn argmax_labels<T: Scalar>(logits: &Tensor<T>) -> LabelMap {
    let (h, w, c) = (logits.shape()[0], logits.shape()[1], logits.shape()[2]);
    let labels = logits
        .data()
        .chunks(c)
        .map(|px| {
            let mut best = 0;
            for (i, &v) in px.iter().enumerate() {
                if v > px[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    LabelMap { height: h, width: w, labels }
}
