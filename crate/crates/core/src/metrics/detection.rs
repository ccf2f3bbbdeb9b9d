use crate::data::ANOMALY;
use crate::error::{Error, Result};

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l == ANOMALY).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Indices sorted by ascending score.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Area under the ROC curve as the Mann-Whitney statistic with ties counted
/// one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let order = ascending(scores);
    // Sum of mid-ranks of the positives; every term is a multiple of 1/2 so
    // the accumulation is exact.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j + 2) as f64 / 2.0;
        let positives = order[i..=j].iter().filter(|&&k| labels[k] == ANOMALY).count();
        rank_sum += mid_rank * positives as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Largest empirical TPR among thresholds whose empirical FPR does not
/// exceed `fpr_target` (step ROC, no interpolation).
pub fn tpr_at_fpr(scores: &[f64], labels: &[u8], fpr_target: f64) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    if !(fpr_target > 0.0 && fpr_target < 1.0) {
        return Err(Error::invalid(format!("fpr target {fpr_target} outside (0, 1)")));
    }
    let mut order = ascending(scores);
    order.reverse();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == ANOMALY {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if fp as f64 / neg as f64 <= fpr_target {
            best = best.max(tp as f64 / pos as f64);
        } else {
            break;
        }
    }
    Ok(best)
}

/// Fraction of anomalies among the `n` highest scores. Equal scores keep
/// their original order.
pub fn precision_at_n(scores: &[f64], labels: &[u8], n: usize) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if n == 0 || n > scores.len() {
        return Err(Error::invalid(format!(
            "n = {n} outside 1..={}",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let hits = idx[..n].iter().filter(|&&i| labels[i] == ANOMALY).count();
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[1., 2., 3., 4.], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[4., 3., 2., 1.], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[1., 2., 3., 4.], &[0, 1, 0, 1]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[1., 1., 1., 1.], &[0, 1, 0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(roc_auc(&[1., 2.], &[0, 0]), Err(Error::SingleClass)));
        assert!(matches!(tpr_at_fpr(&[1., 2.], &[1, 1], 0.05), Err(Error::SingleClass)));
    }

    #[test]
    fn tpr_examples() {
        assert_eq!(tpr_at_fpr(&[1., 2., 3., 4.], &[0, 0, 1, 1], 0.05).unwrap(), 1.0);
        // 20 normals, 10 anomalies above all normals but one.
        let mut scores: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut labels = vec![0u8; 20];
        scores[19] = 100.0;
        scores.extend((0..10).map(|i| 50.0 + i as f64));
        labels.extend(vec![1u8; 10]);
        assert_eq!(tpr_at_fpr(&scores, &labels, 0.05).unwrap(), 1.0);
        assert_eq!(tpr_at_fpr(&[2.0; 6], &[0, 0, 0, 1, 1, 1], 0.05).unwrap(), 0.0);
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision_at_n(&[0.9, 0.8, 0.1], &[1, 0, 0], 2).unwrap(), 0.5);
        assert_eq!(precision_at_n(&[0.9, 0.8, 0.1], &[1, 0, 1], 3).unwrap(), 2.0 / 3.0);
        assert_eq!(precision_at_n(&[5., 4., 3., 2.], &[1, 0, 1, 0], 3).unwrap(), 2.0 / 3.0);
        // ties keep sample order: the earlier normal wins the last slot
        assert_eq!(precision_at_n(&[1., 1., 1.], &[0, 1, 1], 1).unwrap(), 0.0);
        assert!(precision_at_n(&[1.], &[1], 0).is_err());
        assert!(precision_at_n(&[1.], &[1], 2).is_err());
    }

    fn case() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (3usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(-50.0f64..50.0, n),
                prop::collection::vec(0u8..2, n),
            )
        })
        .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transforms((s, l) in case()) {
            let base = roc_auc(&s, &l).unwrap();
            let affine: Vec<f64> = s.iter().map(|v| 3.0 * v - 7.0).collect();
            let cube: Vec<f64> = s.iter().map(|v| v * v * v).collect();
            let exp: Vec<f64> = s.iter().map(|v| (v / 10.0).exp()).collect();
            prop_assert_eq!(roc_auc(&affine, &l).unwrap(), base);
            prop_assert_eq!(roc_auc(&cube, &l).unwrap(), base);
            prop_assert_eq!(roc_auc(&exp, &l).unwrap(), base);
        }

        #[test]
        fn auc_of_negated_scores_complements((s, l) in case()) {
            let mut sorted = s.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let total = roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn precision_at_full_length_is_anomaly_rate((s, l) in case()) {
            let rate = l.iter().filter(|&&v| v == 1).count() as f64 / l.len() as f64;
            prop_assert_eq!(precision_at_n(&s, &l, s.len()).unwrap(), rate);
        }
    }
}
