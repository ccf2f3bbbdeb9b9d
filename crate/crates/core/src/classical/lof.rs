use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::DENSITY_FLOOR;
use crate::detector::{check_dims, map_rows, Scorer};
use crate::error::{Error, Result};
use crate::neighbors::{Neighbor, NeighborIndex};

/// Local outlier factor with reachability distances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LofModel {
    pub n_neighbors: usize,
    index: NeighborIndex,
    /// Distance of every training point to its k-th neighbor.
    k_distance: Vec<f64>,
    /// Local reachability density of every training point.
    lrd: Vec<f64>,
}

fn local_reachability(neighbors: &[Neighbor], k_distance: &[f64]) -> f64 {
    let mean = neighbors
        .iter()
        .map(|n| n.dist().max(k_distance[n.index]))
        .sum::<f64>()
        / neighbors.len() as f64;
    1.0 / mean.max(DENSITY_FLOOR)
}

pub fn lof_fit(train: ArrayView2<f64>, n_neighbors: usize) -> Result<LofModel> {
    let n = train.nrows();
    if n_neighbors == 0 || n_neighbors >= n {
        return Err(Error::invalid(format!(
            "n_neighbors = {n_neighbors} must be in 1..{n}"
        )));
    }
    let index = NeighborIndex::build(train);
    let neighbors: Vec<Vec<Neighbor>> = (0..n).map(|i| index.query_point(i, n_neighbors)).collect();
    let k_distance: Vec<f64> = neighbors.iter().map(|nn| nn.last().unwrap().dist()).collect();
    let lrd = neighbors
        .iter()
        .map(|nn| local_reachability(nn, &k_distance))
        .collect();
    Ok(LofModel {
        n_neighbors,
        index,
        k_distance,
        lrd,
    })
}

impl LofModel {
    pub fn score_one(&self, x: &[f64]) -> f64 {
        let nn = self.index.query(x, self.n_neighbors);
        let own = local_reachability(&nn, &self.k_distance);
        nn.iter().map(|n| self.lrd[n.index]).sum::<f64>() / (nn.len() as f64 * own)
    }
}

impl Scorer for LofModel {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.index.points().ncols(), &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn lattice(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 1), |(i, _)| i as f64)
    }

    #[test]
    fn interior_point_is_inlier() {
        let m = lof_fit(lattice(40).view(), 5).unwrap();
        assert!((m.score_one(&[20.3]) - 1.0).abs() < 0.05);
    }

    #[test]
    fn isolated_point_is_outlier() {
        let m = lof_fit(lattice(40).view(), 5).unwrap();
        assert!(m.score_one(&[49.0]) > 2.0);
    }

    #[test]
    fn duplicates_stay_finite() {
        let train = Array2::from_shape_vec((5, 1), vec![1.0, 1.0, 1.0, 2.0, 3.0]).unwrap();
        let m = lof_fit(train.view(), 2).unwrap();
        assert!(m.score_one(&[1.0]).is_finite());
        assert!(m.score_one(&[7.0]).is_finite());
    }
}
