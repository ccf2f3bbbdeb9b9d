use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::DENSITY_FLOOR;
use crate::detector::{check_dims, map_rows, Scorer};
use crate::error::{Error, Result};
use crate::neighbors::NeighborIndex;

/// Fast angle-based outlier detection restricted to the k nearest neighbors.
/// The score is the negated variance of the weighted angle term, so tightly
/// surrounded points (high variance) score low.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AbodModel {
    pub n_neighbors: usize,
    index: NeighborIndex,
}

pub fn abod_fit(train: ArrayView2<f64>, n_neighbors: usize) -> Result<AbodModel> {
    if n_neighbors < 2 || n_neighbors >= train.nrows() {
        return Err(Error::invalid(format!(
            "n_neighbors = {n_neighbors} must be in 2..{}",
            train.nrows()
        )));
    }
    Ok(AbodModel {
        n_neighbors,
        index: NeighborIndex::build(train),
    })
}

/// Population variance of `<x-b, x-c> / (|x-b|^2 |x-c|^2)` over all pairs.
pub(crate) fn angle_variance(x: &[f64], points: &[&[f64]]) -> f64 {
    let diffs: Vec<Vec<f64>> = points
        .iter()
        .map(|p| x.iter().zip(p.iter()).map(|(a, b)| a - b).collect())
        .collect();
    let norms: Vec<f64> = diffs.iter().map(|d| d.iter().map(|v| v * v).sum()).collect();
    let mut values = Vec::with_capacity(points.len() * points.len() / 2);
    for i in 0..diffs.len() {
        for j in i + 1..diffs.len() {
            let dot: f64 = diffs[i].iter().zip(&diffs[j]).map(|(a, b)| a * b).sum();
            values.push(dot / (norms[i] * norms[j]).max(DENSITY_FLOOR));
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

impl AbodModel {
    pub fn score_one(&self, x: &[f64]) -> f64 {
        let nn = self.index.query(x, self.n_neighbors);
        let pts: Vec<&[f64]> = nn.iter().map(|n| self.index.point(n.index)).collect();
        0.0 - angle_variance(x, &pts)
    }
}

impl Scorer for AbodModel {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.index.points().ncols(), &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}
