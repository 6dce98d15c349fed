//! Base learners: linear (OLS, ridge, quantile regression) and nonlinear (kNN,
//! regression tree, neural network, bagged trees, random forest).

pub mod knn;
pub mod library;
pub mod linear;
pub mod nn;
pub mod quantile;
pub mod tree;

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::CostSpec;

pub use knn::{KnnAlgorithm, KnnState};
pub use library::{build_library, select_best, LibraryConfig, LibraryEntry, ModelLibrary};
pub use linear::LinearCoefficients;
pub use nn::{Activation, NNConfig, NetworkWeights};
pub use tree::{RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    Ols,
    Ridge,
    QuantileReg,
    Knn,
    Tree,
    NeuralNet,
    BaggedTree,
    RandomForest,
}

impl ModelFamily {
    pub fn is_linear(self) -> bool {
        matches!(self, ModelFamily::Ols | ModelFamily::Ridge | ModelFamily::QuantileReg)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelFamily::Ols => "OLS",
            ModelFamily::Ridge => "Ridge",
            ModelFamily::QuantileReg => "QR",
            ModelFamily::Knn => "kNN",
            ModelFamily::Tree => "Tree",
            ModelFamily::NeuralNet => "NN",
            ModelFamily::BaggedTree => "BaggedTree",
            ModelFamily::RandomForest => "RandomForest",
        };
        f.write_str(s)
    }
}

/// Loss a model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossMode {
    Symmetric,
    Pinball { tau: f64 },
    QqcApprox { a: f64, b: f64 },
}

impl LossMode {
    pub fn cost_spec(self) -> Result<CostSpec> {
        match self {
            LossMode::Symmetric => Ok(CostSpec::squared_error()),
            LossMode::Pinball { tau } => CostSpec::pinball(tau),
            LossMode::QqcApprox { a, b } => CostSpec::qqc_approx(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Symmetric,
    Asymmetric,
}

/// A learner with its hyperparameters (and seed, where it uses randomness).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum ModelSpec {
    Ols,
    Ridge {
        lambda: f64,
    },
    QuantileReg {
        tau: f64,
    },
    Knn {
        k: usize,
        algorithm: KnnAlgorithm,
    },
    Tree {
        params: TreeParams,
    },
    NeuralNet {
        config: NNConfig,
        loss_mode: LossMode,
    },
    BaggedTree {
        bags: usize,
        tree: TreeParams,
        seed: u64,
    },
    RandomForest {
        trees: usize,
        mtry: usize,
        tree: TreeParams,
        seed: u64,
    },
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Ols => ModelFamily::Ols,
            ModelSpec::Ridge { .. } => ModelFamily::Ridge,
            ModelSpec::QuantileReg { .. } => ModelFamily::QuantileReg,
            ModelSpec::Knn { .. } => ModelFamily::Knn,
            ModelSpec::Tree { .. } => ModelFamily::Tree,
            ModelSpec::NeuralNet { .. } => ModelFamily::NeuralNet,
            ModelSpec::BaggedTree { .. } => ModelFamily::BaggedTree,
            ModelSpec::RandomForest { .. } => ModelFamily::RandomForest,
        }
    }

    pub fn loss_mode(&self) -> LossMode {
        match self {
            ModelSpec::QuantileReg { tau } => LossMode::Pinball { tau: *tau },
            ModelSpec::NeuralNet { loss_mode, .. } => *loss_mode,
            _ => LossMode::Symmetric,
        }
    }

    /// Quantile regression is always asymmetric; other learners are asymmetric
    /// exactly when trained on a non-squared loss.
    pub fn provenance(&self) -> Provenance {
        match (self.family(), self.loss_mode()) {
            (ModelFamily::QuantileReg, _) => Provenance::Asymmetric,
            (_, LossMode::Symmetric) => Provenance::Symmetric,
            _ => Provenance::Asymmetric,
        }
    }

    pub fn uses_seed(&self) -> bool {
        matches!(
            self,
            ModelSpec::NeuralNet { .. } | ModelSpec::BaggedTree { .. } | ModelSpec::RandomForest { .. }
        )
    }

    /// Same spec with its random seed replaced; a no-op for deterministic learners.
    pub fn with_seed(&self, seed: u64) -> ModelSpec {
        let mut spec = self.clone();
        match &mut spec {
            ModelSpec::NeuralNet { config, .. } => config.seed = seed,
            ModelSpec::BaggedTree { seed: s, .. } | ModelSpec::RandomForest { seed: s, .. } => *s = seed,
            _ => {}
        }
        spec
    }

    /// Short human-readable label, e.g. `RandomForest(trees=100, mtry=5)`.
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Ols => "OLS".into(),
            ModelSpec::Ridge { lambda } => format!("Ridge(lambda={lambda})"),
            ModelSpec::QuantileReg { tau } => format!("QR(tau={tau:.6})"),
            ModelSpec::Knn { k, algorithm } => format!("kNN(k={k}, {algorithm:?})"),
            ModelSpec::Tree { params } => {
                format!("Tree(cp={}, min_node={})", params.complexity, params.min_node)
            }
            ModelSpec::NeuralNet { config, loss_mode } => {
                let kind = match loss_mode {
                    LossMode::Symmetric => "NN".to_string(),
                    LossMode::Pinball { tau } => format!("QRNN(tau={tau:.6})"),
                    LossMode::QqcApprox { a, b } => format!("NNAC(a={a}, b={b})"),
                };
                format!("{kind}(k={}, l1={}, l2={})", config.hidden_nodes, config.lambda1, config.lambda2)
            }
            ModelSpec::BaggedTree { bags, .. } => format!("BaggedTree(bags={bags})"),
            ModelSpec::RandomForest { trees, mtry, .. } => {
                format!("RandomForest(trees={trees}, mtry={mtry})")
            }
        }
    }

    /// Fits on `x`/`y`. `names` label columns in error messages.
    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64], names: Option<&[String]>) -> Result<Model> {
        let state = match self {
            ModelSpec::Ols => FittedState::Linear(linear::ols_coefficients(x, y, names)?),
            ModelSpec::Ridge { lambda } => {
                FittedState::Linear(linear::ridge_coefficients(x, y, *lambda, names)?)
            }
            ModelSpec::QuantileReg { tau } => {
                FittedState::Linear(quantile::quantile_coefficients(x, y, *tau)?.coefficients)
            }
            ModelSpec::Knn { k, algorithm } => {
                FittedState::Knn(knn::fit_knn_state(x, y, *k, *algorithm)?)
            }
            ModelSpec::Tree { params } => FittedState::Tree(tree::fit_tree_state(x, y, *params)?),
            ModelSpec::NeuralNet { config, loss_mode } => {
                FittedState::Network(nn::train_network(x, y, config, *loss_mode)?)
            }
            ModelSpec::BaggedTree { bags, tree, seed } => {
                FittedState::Forest(tree::fit_bootstrap_trees(x, y, *bags, None, *tree, *seed)?)
            }
            ModelSpec::RandomForest {
                trees,
                mtry,
                tree,
                seed,
            } => FittedState::Forest(tree::fit_bootstrap_trees(x, y, *trees, Some(*mtry), *tree, *seed)?),
        };
        Ok(Model {
            spec: self.clone(),
            state,
            n_features: x.ncols(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedState {
    Linear(LinearCoefficients),
    Knn(KnnState),
    Tree(RegressionTree),
    Forest(Vec<RegressionTree>),
    Network(NetworkWeights),
}

/// A fitted base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub state: FittedState,
    pub n_features: usize,
}

impl Model {
    pub fn family(&self) -> ModelFamily {
        self.spec.family()
    }

    pub fn loss_mode(&self) -> LossMode {
        self.spec.loss_mode()
    }

    pub fn provenance(&self) -> Provenance {
        self.spec.provenance()
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }
}

/// Forecasts for every row of `x`.
pub fn predict(model: &Model, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.n_features {
        return Err(Error::Schema(format!(
            "model expects {} feature columns, got {}",
            model.n_features,
            x.ncols()
        )));
    }
    let rows = 0..x.nrows();
    let out = match &model.state {
        FittedState::Linear(coef) => coef.predict(x),
        FittedState::Network(net) => net.predict(x),
        FittedState::Tree(t) => rows.map(|r| t.predict_row(x, r)).collect(),
        FittedState::Knn(st) => rows.into_par_iter().map(|r| st.predict_row(x, r)).collect(),
        FittedState::Forest(trees) => rows
            .into_par_iter()
            .map(|r| tree::predict_forest_row(trees, x, r))
            .collect(),
    };
    Ok(out)
}

pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<Model> {
    ModelSpec::Ols.fit(x, y, None)
}

pub fn fit_ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Model> {
    ModelSpec::Ridge { lambda }.fit(x, y, None)
}

pub fn fit_quantile(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<Model> {
    ModelSpec::QuantileReg { tau }.fit(x, y, None)
}

pub fn fit_nn(x: &DMatrix<f64>, y: &[f64], config: &NNConfig, loss_mode: LossMode) -> Result<Model> {
    ModelSpec::NeuralNet {
        config: config.clone(),
        loss_mode,
    }
    .fit(x, y, None)
}

pub fn fit_knn(x: &DMatrix<f64>, y: &[f64], k: usize, algorithm: KnnAlgorithm) -> Result<Model> {
    ModelSpec::Knn { k, algorithm }.fit(x, y, None)
}

pub fn fit_tree(x: &DMatrix<f64>, y: &[f64], complexity: f64, min_node: usize) -> Result<Model> {
    ModelSpec::Tree {
        params: TreeParams {
            complexity,
            min_node,
            ..TreeParams::default()
        },
    }
    .fit(x, y, None)
}

pub fn fit_bagged_tree(x: &DMatrix<f64>, y: &[f64], bags: usize, seed: u64) -> Result<Model> {
    ModelSpec::BaggedTree {
        bags,
        tree: TreeParams::ensemble_default(),
        seed,
    }
    .fit(x, y, None)
}

pub fn fit_random_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    trees: usize,
    mtry: usize,
    seed: u64,
) -> Result<Model> {
    ModelSpec::RandomForest {
        trees,
        mtry,
        tree: TreeParams::ensemble_default(),
        seed,
    }
    .fit(x, y, None)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn problem() -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(120, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = (0..120).map(|r| 0.5 + 0.2 * x[(r, 0)] * x[(r, 1)] + 0.1 * x[(r, 2)]).collect();
        (x, y)
    }

    #[test]
    fn provenance_flags() {
        assert_eq!(ModelSpec::Ols.provenance(), Provenance::Symmetric);
        assert_eq!(ModelSpec::QuantileReg { tau: 0.5 }.provenance(), Provenance::Asymmetric);
        let nn = |loss_mode| ModelSpec::NeuralNet {
            config: NNConfig::default(),
            loss_mode,
        };
        assert_eq!(nn(LossMode::Symmetric).provenance(), Provenance::Symmetric);
        assert_eq!(nn(LossMode::Pinball { tau: 0.2 }).provenance(), Provenance::Asymmetric);
        assert_eq!(nn(LossMode::QqcApprox { a: 0.2, b: 1.0 }).provenance(), Provenance::Asymmetric);
    }

    #[test]
    fn duplicated_row_gives_identical_outputs() {
        let (x, y) = problem();
        let dup = DMatrix::from_fn(2, 3, |_, c| x[(7, c)]);
        let models = vec![
            fit_ols(&x, &y).unwrap(),
            fit_ridge(&x, &y, 1.0).unwrap(),
            fit_quantile(&x, &y, 0.3).unwrap(),
            fit_knn(&x, &y, 5, KnnAlgorithm::KdTree).unwrap(),
            fit_tree(&x, &y, 0.01, 10).unwrap(),
            fit_bagged_tree(&x, &y, 5, 1).unwrap(),
            fit_random_forest(&x, &y, 5, 2, 1).unwrap(),
            fit_nn(&x, &y, &NNConfig { epochs: 5, ..NNConfig::default() }, LossMode::Symmetric).unwrap(),
        ];
        for m in &models {
            let out = predict(m, &dup).unwrap();
            assert_eq!(out[0], out[1], "{}", m.label());
        }
    }

    #[test]
    fn ols_fitted_residuals_have_zero_mean() {
        let (x, y) = problem();
        let m = fit_ols(&x, &y).unwrap();
        let pred = predict(&m, &x).unwrap();
        let mean: f64 = y.iter().zip(&pred).map(|(a, f)| a - f).sum::<f64>() / y.len() as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn column_mismatch() {
        let (x, y) = problem();
        let m = fit_ols(&x, &y).unwrap();
        let narrow = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(predict(&m, &narrow), Err(Error::Schema(_))));
    }

    #[test]
    fn forest_one_tree_matches_single_bag() {
        let (x, y) = problem();
        let rf = fit_random_forest(&x, &y, 1, 3, 42).unwrap();
        let bag = fit_bagged_tree(&x, &y, 1, 42).unwrap();
        assert_eq!(predict(&rf, &x).unwrap(), predict(&bag, &x).unwrap());
    }

    #[test]
    fn knn_all_neighbors_is_constant_mean() {
        let (x, y) = problem();
        let m = fit_knn(&x, &y, y.len(), KnnAlgorithm::BruteForce).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for p in predict(&m, &x).unwrap() {
            assert!((p - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_fits_reproduce_state() {
        let (x, y) = problem();
        let spec = ModelSpec::RandomForest {
            trees: 4,
            mtry: 2,
            tree: TreeParams::ensemble_default(),
            seed: 0,
        }
        .with_seed(99);
        assert_eq!(spec.fit(&x, &y, None).unwrap(), spec.fit(&x, &y, None).unwrap());
    }
}
