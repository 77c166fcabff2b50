use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Label;

/// Confusion matrix with `True` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl Confusion {
    pub fn from_pairs(labels: &[Label], predictions: &[Label]) -> Result<Self, EvalError> {
        if labels.len() != predictions.len() {
            return Err(EvalError::LengthMismatch { labels: labels.len(), predictions: predictions.len() });
        }
        if labels.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let mut m = Confusion::default();
        for (l, p) in labels.iter().zip(predictions) {
            match (l, p) {
                (Label::True, Label::True) => m.true_pos += 1,
                (Label::False, Label::True) => m.false_pos += 1,
                (Label::True, Label::False) => m.false_neg += 1,
                (Label::False, Label::False) => m.true_neg += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            accuracy: (self.true_pos + self.true_neg) as f64 / self.total() as f64,
            f1_true: f1(self.true_pos, self.false_pos, self.false_neg, "true"),
            f1_false: f1(self.true_neg, self.false_neg, self.false_pos, "false"),
        }
    }
}

fn f1(tp: usize, fp: usize, fn_: usize, class: &str) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        log::warn!("class `{class}` absent from labels and predictions; F1 set to 0");
        return 0.0;
    }
    (2 * tp) as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1_true: f64,
    pub f1_false: f64,
}

impl Metrics {
    pub fn minus(&self, other: &Metrics) -> Metrics {
        Metrics {
            accuracy: self.accuracy - other.accuracy,
            f1_true: self.f1_true - other.f1_true,
            f1_false: self.f1_false - other.f1_false,
        }
    }
}

/// Accuracy over all samples plus per-class F1 (each class taken as positive
/// in turn).
pub fn compute_metrics(labels: &[Label], predictions: &[Label]) -> Result<Metrics, EvalError> {
    Ok(Confusion::from_pairs(labels, predictions)?.metrics())
}

/// Mean over claims of the fraction of the top `min(k, len)` slots holding
/// clean evidence. Each list holds `true` for clean items in rank order;
/// empty lists are skipped.
pub fn clean_precision_at_k(lists: &[Vec<bool>], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let per_claim: Vec<f64> = lists
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let top = &l[..k.min(l.len())];
            top.iter().filter(|&&clean| clean).count() as f64 / top.len() as f64
        })
        .collect();
    if per_claim.is_empty() {
        return Err(EvalError::NoRankedEvidence);
    }
    Ok(per_claim.iter().sum::<f64>() / per_claim.len() as f64)
}
