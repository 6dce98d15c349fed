//! CART regression trees, bagging and random forests.
//!
//! Splits greedily maximize the reduction in the sum of squared errors. A node
//! is split only if it holds at least `min_node` rows and the best split reduces
//! the SSE by at least `complexity` times the root SSE. Each child keeps at least
//! `max(1, min_node / 3)` rows.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::check_xy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub complexity: f64,
    pub min_node: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            complexity: 0.01,
            min_node: 20,
            max_depth: 30,
        }
    }
}

impl TreeParams {
    /// Fully grown trees as used inside bagging and forests.
    pub fn ensemble_default() -> Self {
        TreeParams {
            complexity: 0.0,
            min_node: 5,
            max_depth: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.complexity >= 0.0 && self.complexity.is_finite()) {
            return Err(Error::Config("tree complexity must be >= 0".into()));
        }
        if self.min_node < 2 {
            return Err(Error::Config("tree min_node must be >= 2".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("tree max_depth must be >= 1".into()));
        }
        Ok(())
    }

    fn min_leaf(&self) -> usize {
        (self.min_node / 3).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[(row, feature)] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    params: TreeParams,
    min_gain: f64,
    /// Features considered per split; `None` means all.
    mtry: Option<usize>,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn sse(y: &[f64], rows: &[usize]) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    let sse = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();
    (mean, sse)
}

impl Builder<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let m = self.x.ncols();
        match (self.mtry, self.rng.as_deref_mut()) {
            (Some(mtry), Some(rng)) if mtry < m => {
                let mut all: Vec<usize> = (0..m).collect();
                for i in 0..mtry {
                    let j = rng.random_range(i..m);
                    all.swap(i, j);
                }
                all.truncate(mtry);
                all.sort_unstable();
                all
            }
            _ => (0..m).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], node_sse: f64) -> Option<BestSplit> {
        let min_leaf = self.params.min_leaf();
        let features = self.candidate_features();
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let n = rows.len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = rows.to_vec();
        for &f in &features {
            sorted.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.y[sorted[i]];
                let nl = i + 1;
                let nr = n - nl;
                let xv = self.x[(sorted[i], f)];
                let xn = self.x[(sorted[i + 1], f)];
                if nl < min_leaf || nr < min_leaf || xv == xn {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE reduction = nl·ml² + nr·mr² − n·m²
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64
                    - total * total / n as f64;
                if best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, 0.5 * (xv + xn), gain));
                }
            }
        }
        let (feature, threshold, gain) = best?;
        if gain <= 1e-12 * node_sse || gain < self.min_gain {
            return None;
        }
        let (left, right) = rows.iter().partition(|&&r| self.x[(r, feature)] <= threshold);
        Some(BestSplit {
            feature,
            threshold,
            gain,
            left,
            right,
        })
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (mean, node_sse) = sse(self.y, &rows);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });
        if rows.len() < self.params.min_node || depth >= self.params.max_depth || node_sse <= 0.0 {
            return id;
        }
        if let Some(split) = self.best_split(&rows, node_sse) {
            debug_assert!(split.gain > 0.0);
            let left = self.grow(split.left, depth + 1);
            let right = self.grow(split.right, depth + 1);
            self.nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
        }
        id
    }
}

fn build_tree(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: Vec<usize>,
    params: TreeParams,
    mtry: Option<usize>,
    rng: Option<&mut ChaCha8Rng>,
) -> RegressionTree {
    let (_, root_sse) = sse(y, &rows);
    let mut builder = Builder {
        x,
        y,
        params,
        min_gain: params.complexity * root_sse,
        mtry,
        rng,
        nodes: Vec::new(),
    };
    builder.grow(rows, 0);
    RegressionTree {
        nodes: builder.nodes,
    }
}

pub fn fit_tree_state(x: &DMatrix<f64>, y: &[f64], params: TreeParams) -> Result<RegressionTree> {
    check_xy(x, y)?;
    params.validate()?;
    Ok(build_tree(x, y, (0..y.len()).collect(), params, None, None))
}

/// Trees on bootstrap resamples. Tree `t` draws from its own stream of a ChaCha
/// generator seeded with `seed`, so results do not depend on thread scheduling.
pub fn fit_bootstrap_trees(
    x: &DMatrix<f64>,
    y: &[f64],
    count: usize,
    mtry: Option<usize>,
    params: TreeParams,
    seed: u64,
) -> Result<Vec<RegressionTree>> {
    check_xy(x, y)?;
    params.validate()?;
    if count == 0 {
        return Err(Error::Config("number of trees/bags must be >= 1".into()));
    }
    let m = x.ncols();
    if let Some(mtry) = mtry {
        if mtry == 0 || mtry > m {
            return Err(Error::Config(format!("mtry must be in 1..={m}, got {mtry}")));
        }
    }
    let n = y.len();
    Ok((0..count)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            build_tree(x, y, rows, params, mtry, Some(&mut rng))
        })
        .collect())
}

pub fn predict_forest_row(trees: &[RegressionTree], x: &DMatrix<f64>, row: usize) -> f64 {
    trees.iter().map(|t| t.predict_row(x, row)).sum::<f64>() / trees.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_problem(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.0..1.0));
        let y = (0..n)
            .map(|r| {
                let base: f64 = if x[(r, 0)] > 0.5 { 1.0 } else { 0.2 };
                let xr: f64 = x[(r, 1)];
                base + 0.3 * (xr * 6.0).sin() + rng.random_range(-0.2..0.2)
            })
            .collect();
        (x, y)
    }

    fn mse(tr: &[RegressionTree], x: &DMatrix<f64>, y: &[f64]) -> f64 {
        (0..y.len())
            .map(|r| (y[r] - predict_forest_row(tr, x, r)).powi(2))
            .sum::<f64>()
            / y.len() as f64
    }

    #[test]
    fn first_split_finds_step() {
        let (x, y) = step_problem(400, 1);
        let tree = fit_tree_state(&x, &y, TreeParams::default()).unwrap();
        match tree.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 0);
                assert!((threshold - 0.5).abs() < 0.05);
            }
            _ => panic!("root should split"),
        }
    }

    #[test]
    fn complexity_prunes() {
        let (x, y) = step_problem(400, 2);
        let loose = fit_tree_state(&x, &y, TreeParams { complexity: 0.0, min_node: 5, max_depth: 30 }).unwrap();
        let tight = fit_tree_state(&x, &y, TreeParams { complexity: 0.1, min_node: 5, max_depth: 30 }).unwrap();
        assert!(tight.n_leaves() < loose.n_leaves());
        let stump = fit_tree_state(&x, &y, TreeParams { complexity: 0.0, min_node: 1000, max_depth: 30 }).unwrap();
        assert_eq!(stump.n_leaves(), 1);
    }

    #[test]
    fn one_tree_forest_equals_one_bag() {
        let (x, y) = step_problem(300, 3);
        let p = TreeParams::ensemble_default();
        let bag = fit_bootstrap_trees(&x, &y, 1, None, p, 11).unwrap();
        let rf = fit_bootstrap_trees(&x, &y, 1, Some(3), p, 11).unwrap();
        assert_eq!(bag, rf);
    }

    #[test]
    fn bagging_reduces_variance() {
        let p = TreeParams::ensemble_default();
        let mut wins = 0;
        for seed in 0..10 {
            let (x, y) = step_problem(300, 100 + seed);
            let (xv, yv) = step_problem(300, 200 + seed);
            let single = vec![fit_tree_state(&x, &y, p).unwrap()];
            let bag = fit_bootstrap_trees(&x, &y, 25, None, p, seed).unwrap();
            if mse(&bag, &xv, &yv) <= mse(&single, &xv, &yv) {
                wins += 1;
            }
        }
        assert!(wins >= 8, "bagging won {wins}/10");
    }

    #[test]
    fn deterministic() {
        let (x, y) = step_problem(200, 5);
        let a = fit_bootstrap_trees(&x, &y, 8, Some(2), TreeParams::ensemble_default(), 9).unwrap();
        let b = fit_bootstrap_trees(&x, &y, 8, Some(2), TreeParams::ensemble_default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_mtry() {
        let (x, y) = step_problem(50, 5);
        assert!(matches!(
            fit_bootstrap_trees(&x, &y, 2, Some(4), TreeParams::ensemble_default(), 0),
            Err(Error::Config(_))
        ));
    }
}
