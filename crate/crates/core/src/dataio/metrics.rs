//! Confusion-matrix segmentation metrics.
//!
//! Ratios whose denominator is zero for a class that occurs in the
//! predictions or the ground truth are reported as 0. A class absent from
//! both has no metrics at all (`None`) and is left out of every average.

use serde::Serialize;

use super::LabelMap;
use crate::error::{Error, Result};

/// Pixel counts indexed `[ground_truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.height, pred.width) != (gt.height, gt.width) {
            return Err(Error::dim("evaluate", &[pred.height, pred.width], &[gt.height, gt.width]));
        }
        pred.check_classes(self.classes)?;
        gt.check_classes(self.classes)?;
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            self.counts[g * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn tp(&self, c: usize) -> u64 {
        self.count(c, c)
    }

    fn predicted(&self, c: usize) -> u64 {
        (0..self.classes).map(|g| self.count(g, c)).sum()
    }

    fn actual(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.count(c, p)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: usize,
    pub pixel_acc: f64,
    /// Accuracy over pixels whose ground truth is not background.
    pub fg_acc: Option<f64>,
    pub per_class: Vec<Option<ClassMetrics>>,
    /// Averages over the non-background classes.
    pub avg_precision: Option<f64>,
    pub avg_recall: Option<f64>,
    pub avg_f1: Option<f64>,
    /// Mean IoU over all classes, background included.
    pub mean_iou: Option<f64>,
    /// IoU of all non-background classes merged into one.
    pub fg_iou: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let c = cm.classes;
        let total = cm.total();
        if total == 0 {
            return Err(Error::Config("no pixels to evaluate".into()));
        }
        let per_class: Vec<Option<ClassMetrics>> = (0..c)
            .map(|k| {
                let (tp, pred, act) = (cm.tp(k), cm.predicted(k), cm.actual(k));
                if pred == 0 && act == 0 {
                    return None;
                }
                let precision = ratio(tp, pred);
                let recall = ratio(tp, act);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                Some(ClassMetrics {
                    precision,
                    recall,
                    f1,
                    iou: ratio(tp, pred + act - tp),
                })
            })
            .collect();
        let trace: u64 = (0..c).map(|k| cm.tp(k)).sum();
        let fg_total: u64 = (1..c).map(|k| cm.actual(k)).sum();
        let fg_correct: u64 = (1..c).map(|k| cm.tp(k)).sum();
        let fg_tp: u64 = (1..c).flat_map(|g| (1..c).map(move |p| (g, p))).map(|(g, p)| cm.count(g, p)).sum();
        let fg_pred: u64 = (1..c).map(|k| cm.predicted(k)).sum();
        let fg_union = fg_pred + fg_total - fg_tp;
        let fg = || per_class[1..].iter().flatten();
        Ok(Self {
            classes: c,
            pixel_acc: ratio(trace, total),
            fg_acc: (fg_total > 0).then(|| ratio(fg_correct, fg_total)),
            avg_precision: mean(fg().map(|m| m.precision)),
            avg_recall: mean(fg().map(|m| m.recall)),
            avg_f1: mean(fg().map(|m| m.f1)),
            mean_iou: mean(per_class.iter().flatten().map(|m| m.iou)),
            fg_iou: (fg_union > 0).then(|| ratio(fg_tp, fg_union)),
            per_class,
        })
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        s.push_str(&format!("{:<14}{}\n", "pixel_acc", fmt(Some(self.pixel_acc))));
        s.push_str(&format!("{:<14}{}\n", "fg_acc", fmt(self.fg_acc)));
        s.push_str(&format!("{:<14}{}\n", "avg_precision", fmt(self.avg_precision)));
        s.push_str(&format!("{:<14}{}\n", "avg_recall", fmt(self.avg_recall)));
        s.push_str(&format!("{:<14}{}\n", "avg_f1", fmt(self.avg_f1)));
        s.push_str(&format!("{:<14}{}\n", "mean_iou", fmt(self.mean_iou)));
        s.push_str(&format!("{:<14}{}\n", "fg_iou", fmt(self.fg_iou)));
        s.push_str(&format!("{:<7}{:>10}{:>10}{:>10}{:>10}\n", "class", "precision", "recall", "f1", "iou"));
        for (k, m) in self.per_class.iter().enumerate() {
            match m {
                Some(m) => s.push_str(&format!(
                    "{:<7}{:>10.4}{:>10.4}{:>10.4}{:>10.4}\n",
                    k, m.precision, m.recall, m.f1, m.iou
                )),
                None => s.push_str(&format!("{:<7}{:>10}{:>10}{:>10}{:>10}\n", k, "n/a", "n/a", "n/a", "n/a")),
            }
        }
        s
    }
}

pub fn evaluate(preds: &[LabelMap], gts: &[LabelMap], classes: usize) -> Result<MetricsReport> {
    if preds.len() != gts.len() {
        return Err(Error::dim("evaluate sample count", &[preds.len()], &[gts.len()]));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (p, g) in preds.iter().zip(gts) {
        cm.add(p, g)?;
    }
    MetricsReport::from_confusion(&cm)
}
