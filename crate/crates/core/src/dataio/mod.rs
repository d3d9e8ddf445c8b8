//! Synthetic part-parsing data, PNM image files and segmentation metrics.

mod metrics;
mod pnm;
mod synth;

pub use metrics::{evaluate, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use pnm::{
    decode_label_pgm, decode_pnm, encode_label_pgm, encode_pnm, read_label_pgm, read_pnm, write_color_ppm,
    write_label_pgm, write_pnm, PALETTE,
};
pub use synth::{synth_generate, SynthParams, INTENSITY, NOISE_SIGMA, SYNTH_CLASSES};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Per-pixel class indices, row-major `height x width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<usize>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width || height == 0 || width == 0 {
            return Err(Error::dim("LabelMap", &[height, width], &[labels.len()]));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, class: usize) -> Self {
        Self {
            height,
            width,
            labels: vec![class; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: usize) {
        self.labels[row * self.width + col] = class;
    }

    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(&label) => Err(Error::Label { label, classes }),
            None => Ok(()),
        }
    }

    /// `H x W` tensor holding the raw class indices.
    pub fn to_tensor(&self) -> Tensor<f64> {
        Tensor::new(&[self.height, self.width], self.labels.iter().map(|&l| l as f64).collect())
            .expect("label map dims are nonzero")
    }
}

/// An image (`H x W x 1`, values in `[0, 1]`) with its label map.
#[derive(Debug, Clone, PartialEq)]
pub struct SegSample {
    pub image: Tensor<f64>,
    pub labels: LabelMap,
}
