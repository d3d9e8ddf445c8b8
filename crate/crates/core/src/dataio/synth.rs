//! Seeded synthetic "creature" images for part parsing.
//!
//! Each sample holds one axis-aligned creature on a noisy background:
//!
//! | class | part | geometry |
//! |-------|------|----------|
//! | 1 | body | rectangle, width 30–50% of `W`, height 20–30% of `H` |
//! | 2 | head | square of side `S/6..=S/4` with `S = min(H, W)`, on one horizontal end, raised by half its side |
//! | 3 | tail | line 1–2 px thick, length `W/10..=W/6`, on the other end, in the upper half of the body |
//! | 4 | legs | two columns 2 px wide, length `H/6..=H/4`, under the body's outer edges |
//!
//! Head and tail share one intensity, so only their side of the body and
//! their shape tell them apart. Every pixel gets Gaussian noise with
//! standard deviation [`NOISE_SIGMA`] and is clamped to `[0, 1]`.

use serde::{Deserialize, Serialize};

use super::{LabelMap, SegSample};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::training::Prng;

pub const SYNTH_CLASSES: usize = 5;

/// Base intensity per class: background, body, head, tail, legs.
pub const INTENSITY: [f64; SYNTH_CLASSES] = [0.15, 0.55, 0.85, 0.85, 0.35];

pub const NOISE_SIGMA: f64 = 0.05;

const MIN_SIZE: usize = 24;
const LEG_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl SynthParams {
    pub fn generate(&self) -> Result<Vec<SegSample>> {
        synth_generate(self.seed, self.count, self.height, self.width)
    }
}

fn fill(labels: &mut LabelMap, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, class: usize) {
    for r in rows {
        for c in cols.clone() {
            labels.set(r, c, class);
        }
    }
}

fn draw_labels(rng: &mut Prng, height: usize, width: usize) -> LabelMap {
    let (h, w) = (height, width);
    let bw = rng.int_range(3 * w / 10, w / 2);
    let bh = rng.int_range(h / 5, 3 * h / 10);
    let side = rng.int_range(h.min(w) / 6, h.min(w) / 4);
    let tail_len = rng.int_range(w / 10, w / 6);
    let tail_thick = rng.int_range(1, 2);
    let leg_len = rng.int_range(h / 6, h / 4);
    let head_left = rng.coin();

    // Leave a one-pixel margin around the whole creature.
    let (left, right) = if head_left { (side, tail_len) } else { (tail_len, side) };
    let bx = rng.int_range(1 + left, w - 1 - bw - right);
    let by = rng.int_range(1 + side / 2, h - 1 - bh - leg_len);
    let tail_row = rng.int_range(by, by + bh / 2 - 1);

    let mut labels = LabelMap::filled(h, w, 0);
    fill(&mut labels, by..by + bh, bx..bx + bw, 1);
    let head_top = by - side / 2;
    let (head_cols, tail_cols) = if head_left {
        (bx - side..bx, bx + bw..bx + bw + tail_len)
    } else {
        (bx + bw..bx + bw + side, bx - tail_len..bx)
    };
    fill(&mut labels, head_top..head_top + side, head_cols, 2);
    fill(&mut labels, tail_row..tail_row + tail_thick, tail_cols, 3);
    let legs = by + bh..by + bh + leg_len;
    fill(&mut labels, legs.clone(), bx + 1..bx + 1 + LEG_WIDTH, 4);
    fill(&mut labels, legs, bx + bw - 1 - LEG_WIDTH..bx + bw - 1, 4);
    labels
}

/// Generates `n` samples of size `height x width` from one seeded stream.
pub fn synth_generate(seed: u64, n: usize, height: usize, width: usize) -> Result<Vec<SegSample>> {
    if height < MIN_SIZE || width < MIN_SIZE {
        return Err(Error::Config(format!(
            "synthetic images need at least {MIN_SIZE}x{MIN_SIZE}, got {height}x{width}"
        )));
    }
    if n == 0 {
        return Err(Error::Config("synthetic sample count must be at least 1".into()));
    }
    let mut rng = Prng::new(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let labels = draw_labels(&mut rng, height, width);
        let data = labels
            .labels
            .iter()
            .map(|&l| (INTENSITY[l] + NOISE_SIGMA * rng.normal()).clamp(0.0, 1.0))
            .collect();
        let image = Tensor::new(&[height, width, 1], data)?;
        out.push(SegSample { image, labels });
    }
    Ok(out)
}
