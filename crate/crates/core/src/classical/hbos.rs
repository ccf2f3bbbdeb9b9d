use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::DENSITY_FLOOR;
use crate::detector::{check_dims, map_rows, Scorer};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FeatureHistogram {
    lo: f64,
    width: f64,
    /// Per-bin `ln(density + alpha)`.
    log_density: Vec<f64>,
}

impl FeatureHistogram {
    fn fit(values: impl Iterator<Item = f64> + Clone, n_bins: usize, alpha: f64) -> Self {
        let (mut lo, mut hi) = values
            .clone()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi - lo <= 0.0 {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / n_bins as f64;
        let mut counts = vec![0usize; n_bins];
        let mut total = 0usize;
        for v in values {
            let b = (((v - lo) / width).floor() as usize).min(n_bins - 1);
            counts[b] += 1;
            total += 1;
        }
        let log_density = counts
            .iter()
            .map(|&c| {
                let density = c as f64 / (total as f64 * width);
                (density + alpha).max(DENSITY_FLOOR).ln()
            })
            .collect();
        FeatureHistogram { lo, width, log_density }
    }

    fn log_density_at(&self, v: f64, tol: f64) -> f64 {
        let n_bins = self.log_density.len();
        let hi = self.lo + self.width * n_bins as f64;
        let min = || self.log_density.iter().copied().fold(f64::INFINITY, f64::min);
        if v < self.lo {
            if self.lo - v <= tol * self.width {
                self.log_density[0]
            } else {
                min()
            }
        } else if v >= hi {
            if v - hi <= tol * self.width {
                self.log_density[n_bins - 1]
            } else {
                min()
            }
        } else {
            let b = (((v - self.lo) / self.width).floor() as usize).min(n_bins - 1);
            self.log_density[b]
        }
    }
}

/// Histogram-based outlier score: sum over features of `-ln(density + alpha)`.
///
/// Values beyond the training range by at most `tol` bin widths use the edge
/// bin; farther values get the lowest density of the feature.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HbosModel {
    pub n_bins: usize,
    pub alpha: f64,
    pub tol: f64,
    features: Vec<FeatureHistogram>,
}

pub fn hbos_fit(train: ArrayView2<f64>, n_bins: usize, alpha: f64, tol: f64) -> Result<HbosModel> {
    if train.nrows() == 0 {
        return Err(Error::Empty("hbos training set".into()));
    }
    if n_bins == 0 || !(alpha >= 0.0) || !(tol >= 0.0) {
        return Err(Error::invalid("hbos needs n_bins > 0, alpha >= 0 and tol >= 0"));
    }
    let features = train
        .columns()
        .into_iter()
        .map(|c| FeatureHistogram::fit(c.iter().copied(), n_bins, alpha))
        .collect();
    Ok(HbosModel {
        n_bins,
        alpha,
        tol,
        features,
    })
}

impl HbosModel {
    pub fn score_one(&self, x: &[f64]) -> f64 {
        -self
            .features
            .iter()
            .zip(x)
            .map(|(h, &v)| h.log_density_at(v, self.tol))
            .sum::<f64>()
    }
}

impl Scorer for HbosModel {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.features.len(), &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Axis};

    fn uniform_column(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / (n - 1) as f64)
    }

    #[test]
    fn symmetric_halves() {
        // uniform on [0, 2]: two bins of width 1 with density 1/2 each
        let m = hbos_fit((uniform_column(100) * 2.0).view(), 2, 0.0, 0.5).unwrap();
        let a = m.score_one(&[0.5]);
        assert_eq!(a, m.score_one(&[1.5]));
        assert!((a - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_rules() {
        let mut col = uniform_column(100);
        col[[0, 0]] = 0.001; // keep the first bin sparser than the last
        let m = hbos_fit(col.view(), 10, 0.1, 0.5).unwrap();
        let h = &m.features[0];
        let edge = m.score_one(&[1.0]);
        assert_eq!(m.score_one(&[1.0 + 0.4 * h.width]), edge);
        let min = h.log_density.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(m.score_one(&[1.0 + 0.6 * h.width]), -min);
        assert_eq!(m.score_one(&[-100.0]), -min);
    }

    #[test]
    fn features_add_up() {
        let a = uniform_column(50);
        let b = a.mapv(|v| (v * 7.0).sin());
        let both = ndarray::concatenate(Axis(1), &[a.view(), b.view()]).unwrap();
        let ma = hbos_fit(a.view(), 5, 0.1, 0.5).unwrap();
        let mb = hbos_fit(b.view(), 5, 0.1, 0.5).unwrap();
        let m = hbos_fit(both.view(), 5, 0.1, 0.5).unwrap();
        for x in [[0.3, 0.1], [1.5, -0.9], [-0.2, 0.0]] {
            let sum = ma.score_one(&x[..1]) + mb.score_one(&x[1..]);
            assert!((m.score_one(&x) - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_feature_and_empty_bins_are_finite() {
        let m = hbos_fit(Array2::from_elem((10, 1), 3.0).view(), 4, 0.0, 0.1).unwrap();
        for v in [3.0, 3.4, -1e9, 1e9] {
            assert!(m.score_one(&[v]).is_finite());
        }
    }
}
