//! k-nearest-neighbour regression under Euclidean distance.
//!
//! Neighbours are ordered by (squared distance, training index), so brute force
//! and the k-d tree return identical neighbour sets, ties included.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::check_xy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KnnAlgorithm {
    BruteForce,
    KdTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnState {
    pub k: usize,
    pub algorithm: KnnAlgorithm,
    /// Row-major training points.
    points: Vec<f64>,
    dim: usize,
    targets: Vec<f64>,
    /// k-d tree nodes; empty for brute force.
    nodes: Vec<KdNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KdNode {
    /// Index of the point stored at this node.
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn fit_knn_state(
    x: &DMatrix<f64>,
    y: &[f64],
    k: usize,
    algorithm: KnnAlgorithm,
) -> Result<KnnState> {
    check_xy(x, y)?;
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "k_neighbors must be in 1..={n}, got {k}"
        )));
    }
    let dim = x.ncols();
    let mut points = Vec::with_capacity(n * dim);
    for r in 0..n {
        points.extend(x.row(r).iter());
    }
    let mut state = KnnState {
        k,
        algorithm,
        points,
        dim,
        targets: y.to_vec(),
        nodes: Vec::new(),
    };
    if algorithm == KnnAlgorithm::KdTree {
        let mut idx: Vec<usize> = (0..n).collect();
        state.build(&mut idx, 0);
    }
    Ok(state)
}

impl KnnState {
    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = if self.dim == 0 { 0 } else { depth % self.dim };
        if self.dim > 0 {
            idx.sort_by(|&a, &b| {
                self.point(a)[axis]
                    .total_cmp(&self.point(b)[axis])
                    .then(a.cmp(&b))
            });
        }
        let mid = idx.len() / 2;
        let node = self.nodes.len();
        self.nodes.push(KdNode {
            point: idx[mid],
            axis,
            left: None,
            right: None,
        });
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build(lo, depth + 1);
        let right = self.build(&mut hi[1..], depth + 1);
        self.nodes[node].left = left;
        self.nodes[node].right = right;
        Some(node)
    }

    fn dist2(&self, i: usize, query: &[f64]) -> f64 {
        self.point(i)
            .iter()
            .zip(query)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    fn push(&self, heap: &mut BinaryHeap<Candidate>, cand: Candidate) {
        if heap.len() < self.k {
            heap.push(cand);
        } else if let Some(top) = heap.peek() {
            if cand < *top {
                heap.pop();
                heap.push(cand);
            }
        }
    }

    fn search(&self, node: Option<usize>, query: &[f64], heap: &mut BinaryHeap<Candidate>) {
        let Some(id) = node else { return };
        let nd = &self.nodes[id];
        self.push(
            heap,
            Candidate {
                dist: self.dist2(nd.point, query),
                index: nd.point,
            },
        );
        if self.dim == 0 {
            self.search(nd.left, query, heap);
            self.search(nd.right, query, heap);
            return;
        }
        let diff = query[nd.axis] - self.point(nd.point)[nd.axis];
        let (near, far) = if diff < 0.0 {
            (nd.left, nd.right)
        } else {
            (nd.right, nd.left)
        };
        self.search(near, query, heap);
        // Equal distances must still be explored so that index tie-breaks agree
        // with brute force.
        let worst = heap.peek().map_or(f64::INFINITY, |c| c.dist);
        if heap.len() < self.k || diff * diff <= worst {
            self.search(far, query, heap);
        }
    }

    /// Indices of the k nearest training points, nearest first.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        match self.algorithm {
            KnnAlgorithm::BruteForce => {
                for i in 0..self.targets.len() {
                    self.push(
                        &mut heap,
                        Candidate {
                            dist: self.dist2(i, query),
                            index: i,
                        },
                    );
                }
            }
            KnnAlgorithm::KdTree => self.search(Some(0).filter(|_| !self.nodes.is_empty()), query, &mut heap),
        }
        heap.into_sorted_vec().into_iter().map(|c| c.index).collect()
    }

    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        let query: Vec<f64> = x.row(row).iter().copied().collect();
        let nb = self.neighbors(&query);
        nb.iter().map(|&i| self.targets[i]).sum::<f64>() / nb.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn k_equals_n_gives_mean() {
        let x = DMatrix::from_fn(6, 2, |r, c| (r + c) as f64);
        let y = [1.0, 2.0, 3.0, 4.0, 5.0, 9.0];
        for alg in [KnnAlgorithm::BruteForce, KnnAlgorithm::KdTree] {
            let st = fit_knn_state(&x, &y, 6, alg).unwrap();
            for r in 0..6 {
                assert!((st.predict_row(&x, r) - 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kd_tree_agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // integer grid coordinates force many distance ties
        let x = DMatrix::from_fn(300, 3, |_, _| rng.random_range(0..5) as f64);
        let y: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let q = DMatrix::from_fn(50, 3, |_, _| rng.random_range(0..5) as f64 + 0.5 * rng.random_range(0..2) as f64);
        for k in [1, 3, 10, 40] {
            let brute = fit_knn_state(&x, &y, k, KnnAlgorithm::BruteForce).unwrap();
            let kd = fit_knn_state(&x, &y, k, KnnAlgorithm::KdTree).unwrap();
            for r in 0..50 {
                let query: Vec<f64> = q.row(r).iter().copied().collect();
                assert_eq!(brute.neighbors(&query), kd.neighbors(&query));
            }
        }
    }

    #[test]
    fn too_many_neighbors() {
        let x = DMatrix::from_fn(3, 1, |r, _| r as f64);
        assert!(matches!(
            fit_knn_state(&x, &[1.0, 2.0, 3.0], 4, KnnAlgorithm::BruteForce),
            Err(Error::Config(_))
        ));
    }
}
