//! Model library: a grid of base learners fitted on the ATS, with cached
//! validation forecasts, optionally augmented by asymmetric-loss learners.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict, KnnAlgorithm, LossMode, Model, ModelFamily, ModelSpec, NNConfig, Provenance, TreeParams};
use crate::data::DataSplits;
use crate::error::{Error, Result};
use crate::loss::{check_pair, tau_from_weights, CostSpec};
use crate::seed::derive_seed;

pub const BUNDLE_VERSION: u32 = 1;

/// Families that exist in the wider literature but are not provided here.
const UNSUPPORTED: [&str; 7] = ["SVR", "MARS", "Lasso", "Stepwise", "BoostedTree", "BaggedNN", "BaggedNeuralNet"];

fn supported_family(name: &str) -> Result<ModelFamily> {
    let fam = match name.to_ascii_lowercase().as_str() {
        "ols" | "linear" => ModelFamily::Ols,
        "ridge" => ModelFamily::Ridge,
        "knn" => ModelFamily::Knn,
        "tree" => ModelFamily::Tree,
        "nn" | "neuralnet" => ModelFamily::NeuralNet,
        "baggedtree" => ModelFamily::BaggedTree,
        "randomforest" | "rf" => ModelFamily::RandomForest,
        _ => {
            return Err(match UNSUPPORTED.iter().find(|u| u.eq_ignore_ascii_case(name)) {
                Some(u) => Error::Config(format!("model family '{u}' is not supported")),
                None => Error::Config(format!("unknown model family '{name}'")),
            })
        }
    };
    Ok(fam)
}

/// Hyperparameter grids. Every symmetric family listed in `families` is fitted
/// over the Cartesian product of its grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    pub families: Vec<String>,
    pub ridge_lambdas: Vec<f64>,
    pub knn_neighbors: Vec<usize>,
    pub knn_algorithms: Vec<KnnAlgorithm>,
    pub tree_complexity: Vec<f64>,
    pub tree_min_node: Vec<usize>,
    pub nn_hidden: Vec<usize>,
    pub nn_decay: Vec<f64>,
    pub nn_epochs: usize,
    pub nn_learning_rate: f64,
    pub nn_batch_size: usize,
    pub bagged_bags: Vec<usize>,
    pub forest_trees: Vec<usize>,
    pub forest_mtry: Vec<usize>,
    /// Asymmetry levels `a` (with weight `b` on overestimation) used for the
    /// augmented QR / QRNN / NNAC members.
    pub augment_a: Vec<f64>,
    pub augment_b: f64,
    pub augment_hidden: Vec<usize>,
    pub augment_decay: f64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig {
            families: ["OLS", "Ridge", "kNN", "Tree", "NN", "BaggedTree", "RandomForest"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ridge_lambdas: vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
            knn_neighbors: vec![5, 10, 20, 40, 80],
            knn_algorithms: vec![KnnAlgorithm::KdTree],
            tree_complexity: vec![0.0005, 0.001, 0.005, 0.01],
            tree_min_node: vec![5, 10, 20],
            nn_hidden: vec![4, 8, 16],
            nn_decay: vec![1e-6, 1e-5, 1e-4],
            nn_epochs: 120,
            nn_learning_rate: 0.005,
            nn_batch_size: 64,
            bagged_bags: vec![5, 10, 25, 50],
            forest_trees: vec![50, 100],
            forest_mtry: vec![3, 5, 8, 15],
            augment_a: (1..=10).map(|i| i as f64 / 10.0).collect(),
            augment_b: 1.0,
            augment_hidden: vec![8, 16],
            augment_decay: 1e-5,
        }
    }
}

impl LibraryConfig {
    pub fn validate(&self) -> Result<()> {
        for fam in &self.families {
            supported_family(fam)?;
        }
        if self.families.is_empty() {
            return Err(Error::Config("library lists no model families".into()));
        }
        if self.ridge_lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("ridge lambdas must be >= 0".into()));
        }
        if self.augment_a.iter().any(|a| !(*a > 0.0)) || !(self.augment_b > 0.0) {
            return Err(Error::Config("augmentation weights must be positive".into()));
        }
        Ok(())
    }

    fn nn_config(&self, hidden: usize, decay: f64) -> NNConfig {
        NNConfig {
            hidden_nodes: hidden,
            lambda1: decay,
            lambda2: decay,
            epochs: self.nn_epochs,
            learning_rate: self.nn_learning_rate,
            batch_size: self.nn_batch_size,
            ..NNConfig::default()
        }
    }

    /// Symmetric learners, in a fixed order.
    pub fn symmetric_specs(&self, n_features: usize) -> Result<Vec<ModelSpec>> {
        self.validate()?;
        let families: Vec<ModelFamily> = self
            .families
            .iter()
            .map(|f| supported_family(f))
            .collect::<Result<_>>()?;
        let has = |f: ModelFamily| families.contains(&f);
        let mut specs = Vec::new();
        if has(ModelFamily::Ols) {
            specs.push(ModelSpec::Ols);
        }
        if has(ModelFamily::Ridge) {
            specs.extend(self.ridge_lambdas.iter().map(|&lambda| ModelSpec::Ridge { lambda }));
        }
        if has(ModelFamily::Knn) {
            for &algorithm in &self.knn_algorithms {
                specs.extend(self.knn_neighbors.iter().map(|&k| ModelSpec::Knn { k, algorithm }));
            }
        }
        if has(ModelFamily::Tree) {
            for &complexity in &self.tree_complexity {
                for &min_node in &self.tree_min_node {
                    specs.push(ModelSpec::Tree {
                        params: TreeParams {
                            complexity,
                            min_node,
                            ..TreeParams::default()
                        },
                    });
                }
            }
        }
        if has(ModelFamily::NeuralNet) {
            for &hidden in &self.nn_hidden {
                for &decay in &self.nn_decay {
                    specs.push(ModelSpec::NeuralNet {
                        config: self.nn_config(hidden, decay),
                        loss_mode: LossMode::Symmetric,
                    });
                }
            }
        }
        if has(ModelFamily::BaggedTree) {
            specs.extend(self.bagged_bags.iter().map(|&bags| ModelSpec::BaggedTree {
                bags,
                tree: TreeParams::ensemble_default(),
                seed: 0,
            }));
        }
        if has(ModelFamily::RandomForest) {
            for &trees in &self.forest_trees {
                for &mtry in &self.forest_mtry {
                    specs.push(ModelSpec::RandomForest {
                        trees,
                        mtry: mtry.min(n_features),
                        tree: TreeParams::ensemble_default(),
                        seed: 0,
                    });
                }
            }
        }
        specs.dedup();
        Ok(specs)
    }

    /// QR over the τ grid, QRNN over τ × hidden, NNAC over (a, b) × hidden.
    pub fn asymmetric_specs(&self) -> Result<Vec<ModelSpec>> {
        let mut specs = Vec::new();
        let taus: Vec<f64> = self
            .augment_a
            .iter()
            .map(|&a| tau_from_weights(a, self.augment_b))
            .collect::<Result<_>>()?;
        specs.extend(taus.iter().map(|&tau| ModelSpec::QuantileReg { tau }));
        for &tau in &taus {
            for &hidden in &self.augment_hidden {
                specs.push(ModelSpec::NeuralNet {
                    config: self.nn_config(hidden, self.augment_decay),
                    loss_mode: LossMode::Pinball { tau },
                });
            }
        }
        for &a in &self.augment_a {
            for &hidden in &self.augment_hidden {
                specs.push(ModelSpec::NeuralNet {
                    config: self.nn_config(hidden, self.augment_decay),
                    loss_mode: LossMode::QqcApprox { a, b: self.augment_b },
                });
            }
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    /// Position in the full (augmented) spec list; seeds derive from it.
    pub slot: usize,
    pub model: Model,
    pub validation_predictions: Vec<f64>,
    pub validation_mse: f64,
}

impl LibraryEntry {
    pub fn provenance(&self) -> Provenance {
        self.model.provenance()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLibrary {
    pub format_version: u32,
    pub seed: u64,
    pub augmented: bool,
    pub validation_targets: Vec<f64>,
    pub entries: Vec<LibraryEntry>,
}

/// Fits every configured learner on the ATS and caches validation forecasts.
/// Individual failures are logged and skipped; it is an error only if every
/// fit fails.
pub fn build_library(
    splits: &DataSplits,
    config: &LibraryConfig,
    augment: bool,
    seed: u64,
) -> Result<ModelLibrary> {
    let ats = &splits.ats;
    ats.ensure_not_test("model fitting")?;
    splits.validation.ensure_not_test("model validation")?;
    let mut specs = config.symmetric_specs(ats.n_features())?;
    if augment {
        specs.extend(config.asymmetric_specs()?);
    }
    let seeded: Vec<(usize, ModelSpec)> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.with_seed(derive_seed(seed, i as u64))))
        .collect();

    let mse = CostSpec::squared_error();
    let fitted: Vec<Option<LibraryEntry>> = seeded
        .par_iter()
        .map(|(slot, spec)| {
            let result = spec
                .fit(&ats.features, &ats.target, Some(&ats.feature_names))
                .and_then(|model| {
                    let preds = predict(&model, &splits.validation.features)?;
                    check_pair(&splits.validation.target, &preds)?;
                    Ok((model, preds))
                });
            match result {
                Ok((model, preds)) => Some(LibraryEntry {
                    slot: *slot,
                    validation_mse: mse.mean_unchecked(&splits.validation.target, &preds),
                    model,
                    validation_predictions: preds,
                }),
                Err(e) => {
                    log::warn!("skipping {}: {e}", spec.label());
                    None
                }
            }
        })
        .collect();
    let entries: Vec<LibraryEntry> = fitted.into_iter().flatten().collect();
    if entries.is_empty() {
        return Err(Error::Training("every library model failed to fit".into()));
    }
    log::info!(
        "library: {} of {} models fitted (augmented: {augment})",
        entries.len(),
        specs.len()
    );
    Ok(ModelLibrary {
        format_version: BUNDLE_VERSION,
        seed,
        augmented: augment,
        validation_targets: splits.validation.target.clone(),
        entries,
    })
}

/// Index of the prediction vector with the lowest mean criterion loss; ties go
/// to the lowest index.
pub fn select_best_predictions(
    predictions: &[&[f64]],
    actuals: &[f64],
    criterion: &CostSpec,
) -> Result<usize> {
    criterion.validate()?;
    if predictions.is_empty() {
        return Err(Error::InvalidInput("empty library".into()));
    }
    let mut best = (0, f64::INFINITY);
    for (i, p) in predictions.iter().enumerate() {
        check_pair(actuals, p)?;
        let score = criterion.mean_unchecked(actuals, p);
        if score < best.1 {
            best = (i, score);
        }
    }
    Ok(best.0)
}

/// Library index of the model with the lowest validation loss under `criterion`.
pub fn select_best(library: &ModelLibrary, criterion: &CostSpec) -> Result<usize> {
    let preds: Vec<&[f64]> = library
        .entries
        .iter()
        .map(|e| e.validation_predictions.as_slice())
        .collect();
    select_best_predictions(&preds, &library.validation_targets, criterion)
}

impl ModelLibrary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validation_predictions(&self) -> Vec<&[f64]> {
        self.entries
            .iter()
            .map(|e| e.validation_predictions.as_slice())
            .collect()
    }

    /// Library restricted to entries satisfying `keep`, in their original order.
    pub fn filtered(&self, keep: impl Fn(&LibraryEntry) -> bool) -> ModelLibrary {
        ModelLibrary {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
            augmented: self.augmented
                && self
                    .entries
                    .iter()
                    .any(|e| keep(e) && e.provenance() == Provenance::Asymmetric),
            ..self.clone()
        }
    }

    /// The symmetric-only library contained in an augmented one.
    pub fn symmetric_subset(&self) -> ModelLibrary {
        self.filtered(|e| e.provenance() == Provenance::Symmetric)
    }

    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version\t{}", self.format_version);
        let _ = writeln!(out, "seed\t{}", self.seed);
        let _ = writeln!(out, "augmented\t{}", self.augmented);
        let _ = writeln!(out, "models\t{}", self.entries.len());
        let _ = writeln!(out, "index\tfamily\tprovenance\tvalidation_mse\tlabel");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i}\t{}\t{:?}\t{:.9}\t{}",
                e.model.family(),
                e.provenance(),
                e.validation_mse,
                e.model.label()
            );
        }
        out
    }

    /// Writes `library.json` and `library_manifest.txt` into `dir`.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string(self)
            .map_err(|e| Error::InvalidInput(format!("serializing library: {e}")))?;
        let path = dir.join("library.json");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("library_manifest.txt");
        fs::write(&path, self.manifest()).map_err(|e| Error::io(&path, e))
    }

    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<ModelLibrary> {
        let path = dir.as_ref().join("library.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let lib: ModelLibrary = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if lib.format_version != BUNDLE_VERSION {
            return Err(Error::Schema(format!(
                "library bundle version {} is not supported (expected {BUNDLE_VERSION})",
                lib.format_version
            )));
        }
        Ok(lib)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsupported_family_is_named() {
        let cfg = LibraryConfig {
            families: vec!["OLS".into(), "SVR".into()],
            ..LibraryConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("SVR"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
        let cfg = LibraryConfig {
            families: vec!["Gizmo".into()],
            ..LibraryConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn default_grid_size() {
        let cfg = LibraryConfig::default();
        let sym = cfg.symmetric_specs(15).unwrap();
        assert_eq!(sym.len(), 1 + 6 + 5 + 12 + 9 + 4 + 8);
        assert!(sym.iter().all(|s| s.provenance() == Provenance::Symmetric));
        let asym = cfg.asymmetric_specs().unwrap();
        assert!(asym.iter().all(|s| s.provenance() == Provenance::Asymmetric));
        for fam in ["QR(", "QRNN(", "NNAC("] {
            assert!(asym.iter().any(|s| s.label().starts_with(fam)), "{fam}");
        }
    }

    #[test]
    fn select_best_ties_and_errors() {
        let y = [1.0, 2.0];
        let a = [1.0, 2.5];
        let b = [1.5, 2.0];
        let mse = CostSpec::squared_error();
        assert_eq!(select_best_predictions(&[&a, &b], &y, &mse).unwrap(), 0);
        assert_eq!(select_best_predictions(&[&b], &y, &mse).unwrap(), 0);
        assert!(matches!(
            select_best_predictions(&[], &y, &mse),
            Err(Error::InvalidInput(_))
        ));
    }
}
