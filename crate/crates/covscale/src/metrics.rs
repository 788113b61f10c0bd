//! Classification metrics: accuracy and macro-averaged precision/recall
//! (equal class weight), plus the mean±std aggregation used across folds.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// counts[[t, p]] = samples of true class t predicted as p.
    pub counts: Array2<usize>,
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &[usize], predictions: &[usize], n_classes: usize) -> Self {
        assert_eq!(labels.len(), predictions.len());
        let mut counts = Array2::zeros((n_classes, n_classes));
        for (&t, &p) in labels.iter().zip(predictions) {
            assert!(t < n_classes && p < n_classes, "class id out of range");
            counts[[t, p]] += 1;
        }
        ConfusionMatrix { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hits: usize = (0..self.counts.nrows()).map(|c| self.counts[[c, c]]).sum();
        hits as f64 / self.total() as f64
    }

    /// Mean over classes of TP/(TP+FP); a class never predicted scores 0.
    pub fn macro_precision(&self) -> f64 {
        let c = self.counts.nrows();
        let mut sum = 0.0;
        for class in 0..c {
            let predicted: usize = (0..c).map(|t| self.counts[[t, class]]).sum();
            if predicted > 0 {
                sum += self.counts[[class, class]] as f64 / predicted as f64;
            }
        }
        sum / c as f64
    }

    /// Mean over classes of TP/(TP+FN); an absent class scores 0.
    pub fn macro_recall(&self) -> f64 {
        let c = self.counts.nrows();
        let mut sum = 0.0;
        for class in 0..c {
            let actual: usize = (0..c).map(|p| self.counts[[class, p]]).sum();
            if actual > 0 {
                sum += self.counts[[class, class]] as f64 / actual as f64;
            }
        }
        sum / c as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

pub fn compute_metrics(labels: &[usize], predictions: &[usize], n_classes: usize) -> Metrics {
    let cm = ConfusionMatrix::from_predictions(labels, predictions, n_classes);
    Metrics {
        accuracy: cm.accuracy(),
        macro_precision: cm.macro_precision(),
        macro_recall: cm.macro_recall(),
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "mean of nothing");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The "0.858±0.029" convention for reporting fold aggregates.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3}\u{b1}{std:.3}")
}
