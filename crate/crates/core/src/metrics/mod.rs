//! Detection metrics, rank statistics and critical-difference diagrams.
//!
//! Scores are oriented so that higher means more anomalous; labels use
//! [`crate::data::ANOMALY`] for positives.

mod cd_diagram;
mod detection;
mod nemenyi;
mod ranks;

pub use cd_diagram::{cd_groups, render_cd_svg, write_cd_diagram};
pub use detection::{precision_at_n, roc_auc, tpr_at_fpr};
pub use nemenyi::{nemenyi_cd, nemenyi_q, Alpha, MAX_TABLE_K};
pub use ranks::{average_ranks, RankTable};

use serde::{Deserialize, Serialize};

/// Fraction of NaN scores above which a score vector is discarded.
pub const MAX_NAN_FRACTION: f64 = 0.5;

/// Outcome of [`sanitize_scores`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NanReport {
    pub nan_fraction: f64,
    /// Non-finite values that were replaced.
    pub replaced: usize,
    /// Set when more than half of the scores were NaN; the scores are then
    /// left untouched and must not be evaluated.
    pub discarded: bool,
}

/// Applies the NaN policy in place.
///
/// More than 50% NaN discards the vector. Otherwise NaN and `+inf` become the
/// largest finite score (most anomalous) and `-inf` the smallest.
pub fn sanitize_scores(scores: &mut [f64]) -> NanReport {
    if scores.is_empty() {
        return NanReport {
            nan_fraction: 0.0,
            replaced: 0,
            discarded: false,
        };
    }
    let nan = scores.iter().filter(|v| v.is_nan()).count();
    let nan_fraction = nan as f64 / scores.len() as f64;
    if nan_fraction > MAX_NAN_FRACTION {
        return NanReport {
            nan_fraction,
            replaced: 0,
            discarded: true,
        };
    }
    let finite = scores.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let mut replaced = 0;
    for v in scores.iter_mut() {
        if v.is_nan() || *v == f64::INFINITY {
            *v = hi;
            replaced += 1;
        } else if *v == f64::NEG_INFINITY {
            *v = lo;
            replaced += 1;
        }
    }
    if replaced > 0 {
        log::warn!("replaced {replaced} non-finite scores ({nan} NaN)");
    }
    NanReport {
        nan_fraction,
        replaced,
        discarded: false,
    }
}
