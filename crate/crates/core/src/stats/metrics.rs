//! Ranking and classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    RocAuc,
    MacroF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: MetricName,
    pub value: f64,
}

/// Area under the ROC curve as the Mann-Whitney concordance probability;
/// tied positive/negative pairs count one half. Labels are 0/1.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFiniteInput);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidSpec(format!("binary label expected, got {bad}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum of positives; a tie block over 1-based positions
    // i..=j gets doubled average rank i + j, so everything stays integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        let doubled_rank = (start + 1 + end + 1) as u128;
        let pos_in_block = order[start..=end].iter().filter(|&&i| labels[i] == 1).count();
        doubled_rank_sum += doubled_rank * pos_in_block as u128;
        start = end + 1;
    }
    let np = n_pos as u128;
    let doubled_u = doubled_rank_sum - np * (np + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Mean ROC-AUC over the cumulative splits `label > k` of an ordinal
/// target, `k = 0..classes-2`. Splits with a single class are skipped.
/// For two classes this is plain [`roc_auc`].
pub fn ordinal_auc(scores: &[f64], labels: &[u8], classes: u8) -> Result<f64> {
    if classes < 2 {
        return Err(Error::SingleClass);
    }
    let mut total = 0.0;
    let mut used = 0usize;
    for k in 0..classes - 1 {
        let bin: Vec<u8> = labels.iter().map(|&l| u8::from(l > k)).collect();
        match roc_auc(scores, &bin) {
            Ok(v) => {
                total += v;
                used += 1;
            }
            Err(Error::SingleClass) => continue,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::SingleClass);
    }
    Ok(total / used as f64)
}

/// Unweighted mean of per-class F1 over `classes`. A class absent from both
/// predictions and labels contributes F1 = 0.
pub fn macro_f1(preds: &[u8], labels: &[u8], classes: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if classes.is_empty() {
        return Err(Error::InvalidSpec("macro-F1 needs at least one class".into()));
    }
    let mut sum = 0.0;
    for &c in classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fne = 0usize;
        for (&p, &l) in preds.iter().zip(labels) {
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                _ => {}
            }
        }
        sum += f1_from_counts(tp, fp, fne);
    }
    Ok(sum / classes.len() as f64)
}

/// `2 TP / (2 TP + FP + FN)`, 0 when the denominator vanishes.
#[inline]
pub fn f1_from_counts(tp: usize, fp: usize, fne: usize) -> f64 {
    let denom = 2 * tp + fp + fne;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.2, 0.4, 0.6, 0.8], &[0, 1, 0, 1]).unwrap(), 0.75);
    }

    #[test]
    fn auc_errors() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
        assert!(matches!(roc_auc(&[0.1], &[1, 0]), Err(Error::LengthMismatch(1, 2))));
        assert!(roc_auc(&[f64::NAN, 0.0], &[0, 1]).is_err());
    }

    #[test]
    fn ordinal_auc_reduces_to_binary() {
        let s = [0.2, 0.4, 0.6, 0.8];
        assert_eq!(ordinal_auc(&s, &[0, 1, 0, 1], 2).unwrap(), 0.75);
        // perfectly ordered ternary scores
        assert_eq!(ordinal_auc(&[0.1, 0.5, 0.9], &[0, 1, 2], 3).unwrap(), 1.0);
    }

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 1], &[0, 1, 1], &[0, 1]).unwrap(), 1.0);
        let labels = [0, 0, 1, 1];
        let v = macro_f1(&[0, 0, 0, 0], &labels, &[0, 1]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        // class 2 absent everywhere contributes zero
        assert_eq!(macro_f1(&[0, 1], &[0, 1], &[0, 1, 2]).unwrap(), 2.0 / 3.0);
        assert!(matches!(
            macro_f1(&[0], &[0, 1], &[0, 1]),
            Err(Error::LengthMismatch(1, 2))
        ));
    }
}
