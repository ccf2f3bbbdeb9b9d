use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::DENSITY_FLOOR;
use crate::detector::{check_dims, map_rows, Scorer};
use crate::error::{Error, Result};
use crate::rng;

/// Sparse random projection with an equi-width histogram of the projected
/// training data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Projection {
    pub features: Vec<usize>,
    pub weights: Vec<f64>,
    lo: f64,
    width: f64,
    density: Vec<f64>,
}

impl Projection {
    pub fn project(&self, x: &[f64]) -> f64 {
        self.features.iter().zip(&self.weights).map(|(&f, w)| w * x[f]).sum()
    }

    fn density_at(&self, v: f64) -> f64 {
        let b = ((v - self.lo) / self.width).floor();
        if b >= 0.0 && (b as usize) < self.density.len() {
            self.density[b as usize].max(DENSITY_FLOOR)
        } else {
            DENSITY_FLOOR
        }
    }
}

/// Lightweight on-line detector of anomalies: mean negative log-density over
/// sparse one-dimensional projections.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LodaModel {
    pub n_bins: usize,
    n_features: usize,
    pub projections: Vec<Projection>,
}

/// Fits `n_cuts` projections with `n_bins` bins each.
pub fn loda_fit(train: ArrayView2<f64>, n_bins: usize, n_cuts: usize, seed: u64) -> Result<LodaModel> {
    let (n, d) = train.dim();
    if n == 0 || d == 0 {
        return Err(Error::Empty("loda training set".into()));
    }
    if n_bins == 0 || n_cuts == 0 {
        return Err(Error::invalid("loda needs n_bins > 0 and n_cuts > 0"));
    }
    let nonzero = (d as f64).sqrt().ceil() as usize;
    let mut rng = rng::seeded(seed);
    let mut all: Vec<usize> = (0..d).collect();
    let train = train.as_standard_layout();
    let rows: Vec<&[f64]> = train.outer_iter().map(|r| r.to_slice().unwrap()).collect();
    let projections = (0..n_cuts)
        .map(|_| {
            rng::shuffle(&mut rng, &mut all);
            let mut features = all[..nonzero].to_vec();
            features.sort_unstable();
            let weights = features.iter().map(|_| rng::normal(&mut rng)).collect();
            let mut p = Projection {
                features,
                weights,
                lo: 0.0,
                width: 1.0,
                density: Vec::new(),
            };
            let values: Vec<f64> = rows.iter().map(|r| p.project(r)).collect();
            let (lo, hi) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let range = hi - lo;
            let (lo, hi) = if range > 0.0 {
                (lo - 0.005 * range, hi + 0.005 * range)
            } else {
                (lo - 0.5, hi + 0.5)
            };
            let width = (hi - lo) / n_bins as f64;
            let mut counts = vec![0usize; n_bins];
            for v in values {
                counts[(((v - lo) / width).floor() as usize).min(n_bins - 1)] += 1;
            }
            p.lo = lo;
            p.width = width;
            p.density = counts.iter().map(|&c| c as f64 / (n as f64 * width)).collect();
            p
        })
        .collect();
    Ok(LodaModel {
        n_bins,
        n_features: d,
        projections,
    })
}

impl LodaModel {
    pub fn score_one(&self, x: &[f64]) -> f64 {
        -self
            .projections
            .iter()
            .map(|p| p.density_at(p.project(x)).ln())
            .sum::<f64>()
            / self.projections.len() as f64
    }
}

impl Scorer for LodaModel {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.n_features, &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn projections_have_sqrt_d_nonzeros() {
        for d in [1, 2, 5, 9, 10] {
            let x = Array2::from_shape_fn((30, d), |(i, j)| (i * (j + 1)) as f64);
            let m = loda_fit(x.view(), 10, 7, 3).unwrap();
            for p in &m.projections {
                assert_eq!(p.features.len(), (d as f64).sqrt().ceil() as usize);
                assert!(p.weights.iter().all(|w| *w != 0.0));
            }
        }
    }

    #[test]
    fn dense_bins_score_lower() {
        let mut v: Vec<f64> = vec![0.0; 50];
        v.extend(vec![10.0; 2]);
        let x = Array2::from_shape_vec((52, 1), v).unwrap();
        let m = loda_fit(x.view(), 10, 1, 0).unwrap();
        assert!(m.score_one(&[0.0]) < m.score_one(&[10.0]));
        assert!(m.score_one(&[10.0]) < m.score_one(&[5.0]));
        assert!(m.score_one(&[1e9]).is_finite());
    }

    #[test]
    fn hand_built_histograms() {
        let p = |w: f64, density: Vec<f64>| Projection {
            features: vec![0],
            weights: vec![w],
            lo: 0.0,
            width: 1.0,
            density,
        };
        let m = LodaModel {
            n_bins: 2,
            n_features: 1,
            projections: vec![p(1.0, vec![0.25, 0.75]), p(0.5, vec![0.5, 0.5])],
        };
        // x = 1.5 lands in bin 1 of the first and bin 0 of the second
        let expected = -(0.75f64.ln() + 0.5f64.ln()) / 2.0;
        assert!((m.score_one(&[1.5]) - expected).abs() < 1e-15);
    }
}
