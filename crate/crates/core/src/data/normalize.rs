use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::Dataset;

/// Standard deviations at or below this value mark a constant column.
const DEGENERATE_STD: f64 = 1e-12;

/// Per-column standardization fitted on training rows only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    /// Population standard deviation; constant columns carry 1.0.
    pub std: Array1<f64>,
}

impl Normalizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        assert!(x.nrows() > 0, "normalizer needs at least one row");
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s <= DEGENERATE_STD { 1.0 } else { s });
        Normalizer { mean, std }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }
}

/// Fits a [`Normalizer`] on the rows `train_idx` of `d`.
pub fn fit_normalizer(d: &Dataset, train_idx: &[usize]) -> Normalizer {
    Normalizer::fit(&d.rows(train_idx))
}
