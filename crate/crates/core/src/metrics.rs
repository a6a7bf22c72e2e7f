//! Macro- and micro-averaged F1 for single-label multiclass predictions.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no predictions to score")]
    Empty,
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
}

/// Per-class true positive, false positive and false negative counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

pub fn class_counts(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<ClassCounts, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut counts = ClassCounts {
        tp: vec![0; num_classes],
        fp: vec![0; num_classes],
        fn_: vec![0; num_classes],
    };
    for (&p, &l) in predictions.iter().zip(labels) {
        if let Some(&class) = [p, l].iter().find(|&&c| c >= num_classes) {
            return Err(MetricError::ClassOutOfRange { class, num_classes });
        }
        if p == l {
            counts.tp[p] += 1;
        } else {
            counts.fp[p] += 1;
            counts.fn_[l] += 1;
        }
    }
    Ok(counts)
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Unweighted mean of per-class F1 over all `num_classes` classes; a class
/// that never occurs in either list scores 0.
pub fn macro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<f64, MetricError> {
    let c = class_counts(predictions, labels, num_classes)?;
    let total: f64 = (0..num_classes).map(|k| f1(c.tp[k], c.fp[k], c.fn_[k])).sum();
    Ok(total / num_classes as f64)
}

/// F1 over pooled counts; equal to accuracy for single-label data.
pub fn micro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<f64, MetricError> {
    let c = class_counts(predictions, labels, num_classes)?;
    Ok(f1(c.tp.iter().sum(), c.fp.iter().sum(), c.fn_.iter().sum()))
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect() {
        let y = [0, 1, 2, 1];
        assert_eq!(macro_f1(&y, &y, 3).unwrap(), 1.0);
        assert_eq!(micro_f1(&y, &y, 3).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_two_class() {
        let (labels, preds) = ([0, 0, 1, 1], [0, 1, 1, 1]);
        assert!((macro_f1(&preds, &labels, 2).unwrap() - 11.0 / 15.0).abs() < 1e-15);
        assert_eq!(micro_f1(&preds, &labels, 2).unwrap(), 0.75);
    }

    #[test]
    fn constant_predictor() {
        let (labels, preds) = ([0, 0, 1, 1], [1, 1, 1, 1]);
        assert_eq!(micro_f1(&preds, &labels, 2).unwrap(), 0.5);
        assert!((macro_f1(&preds, &labels, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_still_averaged() {
        let y = [0, 1];
        assert_eq!(macro_f1(&y, &y, 4).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        assert_eq!(macro_f1(&[], &[], 2), Err(MetricError::Empty));
        assert!(matches!(micro_f1(&[0], &[0, 1], 2), Err(MetricError::LengthMismatch { .. })));
        assert!(matches!(macro_f1(&[2], &[0], 2), Err(MetricError::ClassOutOfRange { class: 2, .. })));
    }
}
