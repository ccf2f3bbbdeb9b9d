use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::detector::{check_dims, map_rows, Scorer};
use crate::error::{Error, Result};
use crate::neighbors::NeighborIndex;

/// How the distances to the k nearest neighbors are summarized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnVariant {
    /// Distance to the k-th neighbor.
    Kappa,
    /// Mean distance to the k neighbors.
    Gamma,
    /// Length of the mean displacement vector towards the k neighbors.
    Delta,
}

impl std::str::FromStr for KnnVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kappa" => Ok(KnnVariant::Kappa),
            "gamma" => Ok(KnnVariant::Gamma),
            "delta" => Ok(KnnVariant::Delta),
            other => Err(Error::invalid(format!("unknown knn variant {other}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub variant: KnnVariant,
    index: NeighborIndex,
}

pub fn knn_fit(train: ArrayView2<f64>, k: usize, variant: KnnVariant) -> Result<KnnModel> {
    if k == 0 || k >= train.nrows() {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..{} (training size)",
            train.nrows()
        )));
    }
    Ok(KnnModel {
        k,
        variant,
        index: NeighborIndex::build(train),
    })
}

impl KnnModel {
    pub fn score_one(&self, x: &[f64]) -> f64 {
        let nn = self.index.query(x, self.k);
        match self.variant {
            KnnVariant::Kappa => nn.last().map_or(0.0, |n| n.dist()),
            KnnVariant::Gamma => nn.iter().map(|n| n.dist()).sum::<f64>() / nn.len() as f64,
            KnnVariant::Delta => {
                let mut mean = vec![0.0; x.len()];
                for n in &nn {
                    for (m, (p, q)) in mean.iter_mut().zip(self.index.point(n.index).iter().zip(x)) {
                        *m += p - q;
                    }
                }
                let k = nn.len() as f64;
                mean.iter().map(|m| (m / k) * (m / k)).sum::<f64>().sqrt()
            }
        }
    }
}

impl Scorer for KnnModel {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.index.points().ncols(), &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn examples() {
        let m = knn_fit(array![[0.0], [10.0]].view(), 1, KnnVariant::Kappa).unwrap();
        assert_eq!(m.score_one(&[1.0]), 1.0);
        let m = knn_fit(array![[-1.0], [1.0], [5.0]].view(), 2, KnnVariant::Delta).unwrap();
        assert_eq!(m.score_one(&[0.0]), 0.0);
        let m = knn_fit(array![[0.0], [1.0], [2.0], [3.0]].view(), 2, KnnVariant::Gamma).unwrap();
        assert_eq!(m.score_one(&[5.0]), 2.5);
    }

    #[test]
    fn k_must_be_below_train_size() {
        assert!(knn_fit(array![[0.0], [1.0]].view(), 2, KnnVariant::Kappa).is_err());
        assert!(knn_fit(array![[0.0], [1.0]].view(), 0, KnnVariant::Kappa).is_err());
    }
}
