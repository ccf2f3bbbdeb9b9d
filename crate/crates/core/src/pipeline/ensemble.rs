use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::DetectorKind;
use super::record::{EvalRecord, ScoreSidecar};
use crate::error::{Error, Result};
use crate::metrics::roc_auc;

/// Mid-ranks scaled to `(0, 1]`.
fn rank_normalized(scores: &[f64]) -> Vec<f64> {
    let n = scores.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = mid / n as f64;
        }
        i = j + 1;
    }
    out
}

/// Element-wise mean of equally long score vectors, optionally after
/// replacing each vector by its normalized ranks.
pub fn average_scores(vectors: &[&[f64]], rank_normalize: bool) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or_else(|| Error::Empty("ensemble members".into()))?;
    if vectors.iter().any(|v| v.len() != first.len()) {
        return Err(Error::invalid("ensemble members score different sample counts"));
    }
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        let v = if rank_normalize { rank_normalized(v) } else { v.to_vec() };
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let k = vectors.len() as f64;
    Ok(acc.into_iter().map(|a| a / k).collect())
}

/// Top-k ensemble against the best single member on one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub kind: DetectorKind,
    pub dataset: String,
    pub seed: u64,
    pub k: usize,
    pub members: Vec<String>,
    pub ensemble_auc: f64,
    pub single_auc: f64,
    /// `ensemble_auc - single_auc`.
    pub delta: f64,
}

/// For every (kind, dataset, seed), averages the test scores of the `k`
/// finished records with the best validation `criterion` (ties by canonical
/// config) and compares the ensemble's test AUC with the top member's.
/// Records without stored scores are skipped.
pub fn ensemble_topk(
    records: &[EvalRecord],
    k: usize,
    criterion: &str,
    rank_normalize: bool,
    mut load: impl FnMut(&EvalRecord) -> Result<Option<ScoreSidecar>>,
) -> Result<Vec<EnsembleRow>> {
    if k == 0 {
        return Err(Error::invalid("ensemble size must be positive"));
    }
    let mut groups: BTreeMap<(DetectorKind, String, u64), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && r.val.contains_key(criterion)) {
        groups.entry((r.kind, r.dataset.clone(), r.seed)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((kind, dataset, seed), mut recs) in groups {
        recs.sort_by(|a, b| {
            b.val[criterion]
                .total_cmp(&a.val[criterion])
                .then_with(|| a.config.canonical().cmp(&b.config.canonical()))
        });
        let mut members = Vec::new();
        for r in recs {
            if members.len() == k {
                break;
            }
            if let Some(s) = load(r)? {
                members.push((r.config_id.clone(), s));
            }
        }
        let Some((_, best)) = members.first() else { continue };
        let labels = best.test_labels.clone();
        let vectors: Vec<&[f64]> = members.iter().map(|(_, s)| s.test.as_slice()).collect();
        let ensemble_auc = roc_auc(&average_scores(&vectors, rank_normalize)?, &labels)?;
        let single_auc = roc_auc(&best.test, &labels)?;
        rows.push(EnsembleRow {
            kind,
            dataset,
            seed,
            k,
            members: members.into_iter().map(|(id, _)| id).collect(),
            ensemble_auc,
            single_auc,
            delta: ensemble_auc - single_auc,
        });
    }
    Ok(rows)
}

/// Per-kind mean ensemble gain as CSV (`kind,k,n,mean_delta,min_delta,max_delta`).
pub fn delta_table(rows: &[EnsembleRow]) -> String {
    let mut groups: BTreeMap<(DetectorKind, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.kind, r.k)).or_default().push(r.delta);
    }
    let mut out = String::from("kind,k,n,mean_delta,min_delta,max_delta\n");
    for ((kind, k), d) in groups {
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(out, "{kind},{k},{},{mean:.6},{lo:.6},{hi:.6}", d.len());
    }
    out
}
