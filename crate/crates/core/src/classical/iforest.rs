use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::detector::{check_dims, map_rows, Scorer};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points: `2 H(n-1) - 2 (n-1) / n`, with the harmonic number summed
/// exactly.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let harmonic: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    2.0 * harmonic - 2.0 * (n - 1) as f64 / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IForestParams {
    pub n_trees: usize,
    /// Subsample size as a fraction of the training set.
    pub max_samples: f64,
    /// Fraction of features each tree may split on.
    pub max_features: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Node {
    Leaf { size: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

struct Builder<'a, 'b> {
    data: &'a ArrayView2<'b, f64>,
    features: Vec<usize>,
    height_limit: usize,
    nodes: Vec<Node>,
}

impl Builder<'_, '_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= self.height_limit || rows.len() <= 1 {
            return id;
        }
        let ranges: Vec<(usize, f64, f64)> = self
            .features
            .iter()
            .filter_map(|&f| {
                let (lo, hi) = rows
                    .iter()
                    .map(|&r| self.data[[r, f]])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng::index(rng, ranges.len())];
        let mut threshold = rng::uniform(rng, lo, hi);
        if threshold <= lo {
            // keep both sides non-empty
            threshold = lo + (hi - lo) * 0.5;
        }
        let mut split = 0;
        for i in 0..rows.len() {
            if self.data[[rows[i], feature]] < threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl Tree {
    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split { feature, threshold, left, right } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }

    fn max_depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Isolation forest; scores lie in (0, 1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IForestModel {
    pub params: IForestParams,
    pub subsample_size: usize,
    pub normalizer: f64,
    n_features: usize,
    trees: Vec<Tree>,
}

pub fn iforest_fit(train: ArrayView2<f64>, params: IForestParams, seed: u64) -> Result<IForestModel> {
    let (n, d) = train.dim();
    if n < 2 || d == 0 {
        return Err(Error::InsufficientData(format!("isolation forest needs >= 2 rows, got {n}")));
    }
    if params.n_trees == 0
        || !(params.max_samples > 0.0 && params.max_samples <= 1.0)
        || !(params.max_features > 0.0 && params.max_features <= 1.0)
    {
        return Err(Error::invalid(format!("bad isolation forest parameters {params:?}")));
    }
    let psi = ((params.max_samples * n as f64).floor() as usize).clamp(2, n);
    let n_feat = ((params.max_features * d as f64).floor() as usize).clamp(1, d);
    let height_limit = (psi as f64).log2().ceil() as usize;
    let mut rng = rng::seeded(seed);
    let mut all_rows: Vec<usize> = (0..n).collect();
    let mut all_features: Vec<usize> = (0..d).collect();
    let trees = (0..params.n_trees)
        .map(|_| {
            rng::shuffle(&mut rng, &mut all_rows);
            rng::shuffle(&mut rng, &mut all_features);
            let mut rows = all_rows[..psi].to_vec();
            let mut features = all_features[..n_feat].to_vec();
            features.sort_unstable();
            let mut b = Builder {
                data: &train,
                features,
                height_limit,
                nodes: Vec::new(),
            };
            b.grow(&mut rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(IForestModel {
        params,
        subsample_size: psi,
        normalizer: average_path_length(psi),
        n_features: d,
        trees,
    })
}

impl IForestModel {
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score_one(&self, x: &[f64]) -> f64 {
        2f64.powf(-self.mean_path_length(x) / self.normalizer)
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::max_depth).max().unwrap_or(0)
    }
}

impl Scorer for IForestModel {
    fn score(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        check_dims(self.n_features, &x)?;
        Ok(map_rows(x, |r| self.score_one(r)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticKind};

    const PARAMS: IForestParams = IForestParams {
        n_trees: 100,
        max_samples: 0.5,
        max_features: 1.0,
    };

    #[test]
    fn normalizing_constant() {
        assert_eq!(average_path_length(2), 1.0);
        assert_eq!(average_path_length(1), 0.0);
        let c3 = 2.0 * 1.5 - 2.0 * 2.0 / 3.0;
        assert!((average_path_length(3) - c3).abs() < 1e-15);
    }

    #[test]
    fn outlier_scores_high_and_depth_is_bounded() {
        let d = make_synthetic(SyntheticKind::Blobs, 300, 1, 3);
        let normals = d.features.slice(ndarray::s![..300, ..]);
        let m = iforest_fit(normals, PARAMS, 11).unwrap();
        assert!(m.max_depth() <= (m.subsample_size as f64).log2().ceil() as usize);
        let far = m.score_one(&[8.0, -8.0]);
        let inner = m.score_one(&[-2.0, -2.0]);
        assert!(far > 0.6, "far = {far}");
        assert!(inner < far);
        for s in m.score(normals).unwrap() {
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn seeded_fit_is_deterministic() {
        let d = make_synthetic(SyntheticKind::Ring, 100, 1, 1);
        let a = iforest_fit(d.features.view(), PARAMS, 5).unwrap();
        let b = iforest_fit(d.features.view(), PARAMS, 5).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn constant_data_gives_single_leaves() {
        let x = ndarray::Array2::from_elem((20, 3), 1.0);
        let m = iforest_fit(x.view(), PARAMS, 0).unwrap();
        assert_eq!(m.max_depth(), 0);
        // every path is c(psi), so the score is exactly one half
        assert!((m.score_one(&[1.0, 1.0, 1.0]) - 0.5).abs() < 1e-15);
    }
}
