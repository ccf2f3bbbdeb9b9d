//! Common interface of fitted anomaly detectors.

use ndarray::ArrayView2;

use crate::error::Result;

/// A fitted model that maps samples (rows) to anomaly scores, higher meaning
/// more anomalous.
pub trait Scorer: Send + Sync {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>>;
}

pub(crate) fn check_dims(expected: usize, x: &ArrayView2<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(crate::Error::invalid(format!(
            "model expects {expected} features, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

/// Applies `f` to every row as a contiguous slice.
pub(crate) fn map_rows(x: ArrayView2<f64>, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let x = x.as_standard_layout();
    x.outer_iter()
        .map(|row| f(row.as_slice().expect("standard layout")))
        .collect()
}
