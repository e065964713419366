use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank-based (Mann-Whitney) ROC-AUC with midranks for tied scores.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined("labels contain a single class".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::AucUndefined("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Positive-class recall and unweighted mean of the per-class F1 scores at
/// `threshold`. A class with neither true nor predicted members scores F1 = 1.
pub fn recall_and_macro_f1(probabilities: &[f64], labels: &[u8], threshold: f64) -> Result<(f64, f64)> {
    if probabilities.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: probabilities.len(),
            got: labels.len(),
        });
    }
    let predictions: Vec<u8> = probabilities.iter().map(|&p| u8::from(p >= threshold)).collect();
    classification_scores(&predictions, labels)
}

/// [`recall_and_macro_f1`] on hard predictions.
pub fn classification_scores(predictions: &[u8], labels: &[u8]) -> Result<(f64, f64)> {
    // confusion[truth][prediction]
    let mut confusion = [[0usize; 2]; 2];
    for (&p, &y) in predictions.iter().zip(labels) {
        confusion[usize::from(y.min(1))][usize::from(p.min(1))] += 1;
    }
    let positives = confusion[1][0] + confusion[1][1];
    if positives == 0 || confusion[0][0] + confusion[0][1] == 0 {
        return Err(Error::InvalidInput("both classes must be present".into()));
    }
    let recall = confusion[1][1] as f64 / positives as f64;
    let f1 = |c: usize| {
        let o = 1 - c;
        let tp = confusion[c][c];
        let denom = 2 * tp + confusion[o][c] + confusion[c][o];
        if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    Ok((recall, (f1(0) + f1(1)) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean with a percentile interval at `level`. The interval is widened to
/// contain the mean when a skewed sample would otherwise exclude it.
pub fn aggregate_ci(values: &[f64], level: f64) -> Result<Interval> {
    if values.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "confidence interval needs at least 2 values, got {}",
            values.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::config("level", "must lie in (0,1)"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let alpha = (1.0 - level) / 2.0;
    let lo = percentile_sorted(&sorted, alpha);
    let hi = percentile_sorted(&sorted, 1.0 - alpha);
    Ok(Interval {
        mean,
        lo: lo.min(mean),
        hi: hi.max(mean),
    })
}
