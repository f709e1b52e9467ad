use crate::error::{Error, Result};

/// Area under the ROC curve as the Wilcoxon-Mann-Whitney statistic: the
/// fraction of (positive, negative) pairs in which the positive scores
/// higher, with ties counted one half.
///
/// Pair counts are accumulated as integers (doubled, so ties stay exact);
/// the only rounding is the final division.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("AUC scores contain NaN".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels {
            needed: 1,
            positives: positives as usize,
            negatives: negatives as usize,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the number of correctly ordered pairs
    let mut doubled: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_tied, mut neg_tied) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos_tied += 1;
            } else {
                neg_tied += 1;
            }
            j += 1;
        }
        doubled += pos_tied * (2 * negatives_below + neg_tied);
        negatives_below += neg_tied;
        i = j;
    }
    Ok(doubled as f64 / (2 * positives * negatives) as f64)
}
