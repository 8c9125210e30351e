use serde::{Deserialize, Serialize};

use crate::corpus::LabelId;
use crate::error::{Error, Result};

/// Rows are gold labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn num_labels(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, gold: LabelId, pred: LabelId) -> u64 {
        self.counts[gold][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gold_counts(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn predicted_counts(&self) -> Vec<u64> {
        (0..self.num_labels())
            .map(|p| self.counts.iter().map(|r| r[p]).sum())
            .collect()
    }

    pub fn true_positives(&self, k: LabelId) -> u64 {
        self.counts[k][k]
    }

    /// Elementwise sum; both matrices must have the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_labels() != self.num_labels() {
            return Err(Error::Shape("confusion matrices differ in size".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion(gold: &[LabelId], pred: &[LabelId], k: usize) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!("{} gold labels but {} predictions", gold.len(), pred.len())));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no examples to evaluate".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("empty label set".into()));
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&g, &p) in gold.iter().zip(pred) {
        for l in [g, p] {
            if l >= k {
                return Err(Error::OutOfRange { index: l, len: k });
            }
        }
        cm.counts[g][p] += 1;
    }
    Ok(cm)
}

/// F1 per label; any zero denominator makes the term 0.
pub fn per_label_f1(cm: &ConfusionMatrix) -> Vec<f64> {
    let gold = cm.gold_counts();
    let predicted = cm.predicted_counts();
    (0..cm.num_labels())
        .map(|k| {
            let tp = cm.true_positives(k) as f64;
            let precision = ratio(tp, predicted[k] as f64);
            let recall = ratio(tp, gold[k] as f64);
            ratio(2.0 * precision * recall, precision + recall)
        })
        .collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Unweighted mean of [`per_label_f1`] over all `k` labels.
pub fn macro_f1(gold: &[LabelId], pred: &[LabelId], k: usize) -> Result<f64> {
    Ok(macro_f1_from(&confusion(gold, pred, k)?))
}

pub fn macro_f1_from(cm: &ConfusionMatrix) -> f64 {
    mean(&per_label_f1(cm))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub(crate) fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}
