//! Exact k-nearest-neighbor search.
//!
//! Neighbors are ordered by `(squared distance, index)`, so the tree and the
//! brute-force scan return identical lists, ties included.

use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Dimensionality above which the tree is skipped in favor of a linear scan.
pub const MAX_TREE_DIMS: usize = 64;
const LEAF_SIZE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub dist2: f64,
    pub index: usize,
}

impl Neighbor {
    pub fn dist(&self) -> f64 {
        self.dist2.sqrt()
    }
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct KdTree {
    nodes: Vec<Node>,
    /// Point indices, permuted so that each leaf owns a contiguous range.
    perm: Vec<usize>,
}

impl KdTree {
    fn build(points: &Array2<f64>) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            perm: (0..points.nrows()).collect(),
        };
        if points.nrows() > 0 {
            tree.build_node(points, 0, points.nrows());
        }
        tree
    }

    fn build_node(&mut self, points: &Array2<f64>, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        // split the widest dimension at the median
        let dims = points.ncols();
        let mut best = (0, 0.0);
        for d in 0..dims {
            let (lo, hi) = self.perm[start..end]
                .iter()
                .map(|&i| points[[i, d]])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        if best.1 <= 0.0 {
            return id;
        }
        let dim = best.0;
        let mid = start + (end - start) / 2;
        self.perm[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[[a, dim]].total_cmp(&points[[b, dim]]));
        let value = points[[self.perm[mid], dim]];
        let left = self.build_node(points, start, mid);
        let right = self.build_node(points, mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }
}

/// Reference point set with an optional kd-tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "Array2<f64>", into = "Array2<f64>")]
pub struct NeighborIndex {
    points: Array2<f64>,
    tree: Option<KdTree>,
}

impl From<Array2<f64>> for NeighborIndex {
    fn from(points: Array2<f64>) -> Self {
        NeighborIndex::build(points.view())
    }
}

impl From<NeighborIndex> for Array2<f64> {
    fn from(index: NeighborIndex) -> Self {
        index.points
    }
}

impl NeighborIndex {
    /// Builds a kd-tree when the dimensionality allows it.
    pub fn build(points: ArrayView2<f64>) -> Self {
        let points = points.as_standard_layout().into_owned();
        let tree = (points.ncols() <= MAX_TREE_DIMS).then(|| KdTree::build(&points));
        NeighborIndex { points, tree }
    }

    /// Index that always scans every point.
    pub fn brute_force(points: ArrayView2<f64>) -> Self {
        NeighborIndex {
            points: points.as_standard_layout().into_owned(),
            tree: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.points.ncols();
        &self.points.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// The `k` nearest reference points to `x`, closest first.
    pub fn query(&self, x: &[f64], k: usize) -> Vec<Neighbor> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        match &self.tree {
            Some(tree) => self.search(tree, 0, x, k, &mut heap),
            None => {
                for i in 0..self.len() {
                    push(&mut heap, k, Neighbor { dist2: squared_distance(x, self.point(i)), index: i });
                }
            }
        }
        heap.into_sorted_vec()
    }

    /// The `k` nearest neighbors of reference point `i`, excluding itself.
    pub fn query_point(&self, i: usize, k: usize) -> Vec<Neighbor> {
        let mut found = self.query(self.point(i), k + 1);
        match found.iter().position(|n| n.index == i) {
            Some(pos) => {
                found.remove(pos);
            }
            None => {
                found.truncate(k);
            }
        }
        found
    }

    fn search(&self, tree: &KdTree, node: usize, x: &[f64], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match tree.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &tree.perm[start..end] {
                    push(heap, k, Neighbor { dist2: squared_distance(x, self.point(i)), index: i });
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = x[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(tree, near, x, k, heap);
                // equal distances may still hold smaller indices, so only
                // prune strictly farther planes
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.search(tree, far, x, k, heap);
                }
            }
        }
    }
}

fn push(heap: &mut BinaryHeap<Neighbor>, k: usize, n: Neighbor) {
    if heap.len() < k {
        heap.push(n);
    } else if n < *heap.peek().unwrap() {
        heap.pop();
        heap.push(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn random_points(n: usize, d: usize, seed: u64, grid: bool) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_fn((n, d), |_| {
            let v = rng::uniform(&mut r, -3.0, 3.0);
            if grid {
                v.round()
            } else {
                v
            }
        })
    }

    #[test]
    fn tree_matches_brute_force() {
        for (seed, d) in [(1, 1), (2, 2), (3, 5), (4, 3)] {
            for grid in [false, true] {
                let pts = random_points(200, d, seed, grid);
                let tree = NeighborIndex::build(pts.view());
                let brute = NeighborIndex::brute_force(pts.view());
                let queries = random_points(30, d, seed + 100, grid);
                for q in queries.rows() {
                    let q = q.to_vec();
                    for k in [1, 5, 17, 200] {
                        assert_eq!(tree.query(&q, k), brute.query(&q, k));
                    }
                }
                for i in 0..pts.nrows() {
                    assert_eq!(tree.query_point(i, 4), brute.query_point(i, 4));
                }
            }
        }
    }

    #[test]
    fn query_point_excludes_self() {
        let pts = Array2::from_shape_vec((4, 1), vec![0.0, 0.0, 0.0, 5.0]).unwrap();
        let idx = NeighborIndex::build(pts.view());
        let n = idx.query_point(2, 2);
        assert_eq!(n.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 1]);
        let n = idx.query_point(0, 1);
        assert_eq!(n[0].index, 1);
    }

    #[test]
    fn serde_round_trip_rebuilds_tree() {
        let pts = random_points(50, 2, 9, false);
        let idx = NeighborIndex::build(pts.view());
        let json = serde_json::to_string(&idx).unwrap();
        let back: NeighborIndex = serde_json::from_str(&json).unwrap();
        assert!(back.tree.is_some());
        assert_eq!(back.query(&[0.1, 0.2], 7), idx.query(&[0.1, 0.2], 7));
    }

    proptest! {
        #[test]
        fn tree_equals_scan(seed in 0u64..1000, n in 1usize..120, d in 1usize..4, k in 1usize..10) {
            let pts = random_points(n, d, seed, seed % 2 == 0);
            let tree = NeighborIndex::build(pts.view());
            let brute = NeighborIndex::brute_force(pts.view());
            let q = random_points(1, d, seed ^ 0xabc, false).row(0).to_vec();
            prop_assert_eq!(tree.query(&q, k), brute.query(&q, k));
        }
    }
}
