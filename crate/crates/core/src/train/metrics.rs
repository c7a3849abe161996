//! Threshold metrics and the empirical (rank-based) ROC AUC.

use std::cmp::Ordering;

use crate::data::Label;
use crate::error::{Error, Result};

pub const DECISION_THRESHOLD: f64 = 0.5;

/// Accuracy of the samples whose diameter falls in one size bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketAccuracy {
    pub name: &'static str,
    pub count: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    /// `None` when nothing was predicted positive.
    pub precision: Option<f64>,
    /// `None` when there are no positives.
    pub sensitivity: Option<f64>,
    /// `None` unless both classes are present.
    pub auc: Option<f64>,
    pub per_size: Vec<BucketAccuracy>,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Positive means strictly above the threshold; a score equal to the
/// threshold counts as benign.
#[inline]
pub fn predict_positive(score: f64, threshold: f64) -> bool {
    score > threshold
}

pub fn evaluate_metrics(scores: &[f64], labels: &[Label], threshold: f64) -> Result<MetricsReport> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidShape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to evaluate".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (predict_positive(s, threshold), l) {
            (true, Label::Malignant) => tp += 1,
            (true, Label::Benign) => fp += 1,
            (false, Label::Benign) => tn += 1,
            (false, Label::Malignant) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let both = tp + fn_ > 0 && tn + fp > 0;
    Ok(MetricsReport {
        tp,
        fp,
        tn,
        fn_,
        accuracy: (tp + tn) as f64 / scores.len() as f64,
        precision: ratio(tp, tp + fp),
        sensitivity: ratio(tp, tp + fn_),
        auc: if both { Some(roc_auc(scores, labels)?) } else { None },
        per_size: Vec::new(),
    })
}

fn class_counts(labels: &[Label]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == Label::Malignant).count();
    (pos, labels.len() - pos)
}

pub(crate) fn require_both_classes(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidShape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(
            "ROC analysis needs at least one sample of each class".into(),
        ));
    }
    Ok((pos, neg))
}

/// `P(score⁺ > score⁻) + ½·P(score⁺ = score⁻)` over all positive/negative
/// pairs, computed from mid-ranks in `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let (pos, neg) = require_both_classes(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j]
            .iter()
            .filter(|&&k| labels[k] == Label::Malignant)
            .count();
        rank_sum += mid * positives as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Benign as B, Malignant as M};

    #[test]
    fn hand_counted_confusion() {
        let r = evaluate_metrics(&[0.9, 0.8, 0.7, 0.1], &[M, B, M, B], 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (2, 1, 1, 0));
        assert_eq!(r.accuracy, 0.75);
        assert!((r.precision.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.sensitivity, Some(1.0));
        assert_eq!(r.total(), 4);
    }

    #[test]
    fn perfect_scores() {
        let r = evaluate_metrics(&[1.0, 0.0, 1.0], &[M, B, M], 0.5).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.precision, Some(1.0));
        assert_eq!(r.sensitivity, Some(1.0));
        assert_eq!(r.auc, Some(1.0));
    }

    #[test]
    fn ties_at_threshold_are_benign() {
        let r = evaluate_metrics(&[0.5; 4], &[M, B, M, B], 0.5).unwrap();
        assert_eq!(r.sensitivity, Some(0.0));
        assert_eq!(r.precision, None);
        assert_eq!(r.auc, Some(0.5));
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[B, B, M, M]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[M, M, B, B]).unwrap(), 0.0);
        assert!(roc_auc(&[0.1, 0.2], &[B, B]).is_err());
        assert!(evaluate_metrics(&[0.1], &[B, M], 0.5).is_err());
    }
}
