use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Support-weighted averages.
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    /// Classes with no gold example; they score 0 in the macro averages.
    pub absent_classes: Vec<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus per-class and averaged precision / recall / F1 over
/// `n_classes` classes. Every 0/0 is taken as 0.
pub fn macro_metrics(predictions: &[usize], golds: &[usize], n_classes: usize) -> Result<Metrics> {
    if predictions.len() != golds.len() {
        return Err(Error::Precondition(format!("{} predictions for {} gold labels", predictions.len(), golds.len())));
    }
    if let Some(&c) = predictions.iter().chain(golds).find(|&&c| c >= n_classes) {
        return Err(Error::Precondition(format!("class {c} outside {n_classes} classes")));
    }
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (&p, &g) in predictions.iter().zip(golds) {
        predicted[p] += 1;
        support[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { precision, recall, f1, support: support[c] }
        })
        .collect();
    let absent_classes: Vec<usize> = (0..n_classes).filter(|&c| support[c] == 0).collect();
    if !absent_classes.is_empty() && !golds.is_empty() {
        log::warn!("classes {absent_classes:?} have no gold examples; they count as 0 in macro averages");
    }
    let k = n_classes.max(1) as f64;
    let n = golds.len();
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        if n == 0 {
            0.0
        } else {
            per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / n as f64
        }
    };
    Ok(Metrics {
        accuracy: ratio(tp.iter().sum(), n),
        macro_precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        per_class,
        absent_classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: var.sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let g = [0, 1, 2, 2, 1, 0];
        let m = macro_metrics(&g, &g, 3).unwrap();
        assert_eq!((m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_computed_fixture() {
        // confusion (gold rows, predicted columns):
        //   g0: p0 p0 p1   g1: p1 p2   g2: p2
        let golds = [0, 0, 0, 1, 1, 2];
        let preds = [0, 0, 1, 1, 2, 2];
        let m = macro_metrics(&preds, &golds, 3).unwrap();
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
        // class 0: P = 2/2, R = 2/3, F1 = 0.8
        assert!((m.per_class[0].f1 - 0.8).abs() < 1e-12);
        // class 1: P = 1/2, R = 1/2
        assert!((m.per_class[1].f1 - 0.5).abs() < 1e-12);
        // class 2: P = 1/2, R = 1, F1 = 2/3
        assert!((m.per_class[2].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_f1 - (0.8 + 0.5 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
        assert!((m.macro_precision - (1.0 + 0.5 + 0.5) / 3.0).abs() < 1e-12);
        assert!((m.weighted_recall - m.accuracy).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_on_balanced_golds() {
        let golds: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let preds = vec![2; 30];
        let m = macro_metrics(&preds, &golds, 3).unwrap();
        // F1 of the predicted class: P = 1/3, R = 1 -> 0.5
        assert!((m.per_class[2].f1 - 0.5).abs() < 1e-12);
        assert!((m.macro_f1 - 0.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_counts_as_zero() {
        let m = macro_metrics(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(m.absent_classes, vec![2]);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(macro_metrics(&[0], &[0, 1], 2).is_err());
    }
}
