//! Tabular data: ingestion, dummy encoding, the train/validation/test protocol,
//! feature standardization and a seeded synthetic resale-price generator.

mod io;
mod split;
pub mod synth;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use io::{load_csv, load_raw_csv, ColumnType, RawColumn, RawTable, Schema};
pub use split::{split, standardize, DataSplits, Standardizer};
pub use synth::{synth_generate, synth_raw, SynthConfig};

/// Upper bound accepted for resale-to-list-price ratios.
pub const MAX_TARGET: f64 = 1.5;

/// Which partition a dataset's rows belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    Source,
    Ats,
    Validation,
    Test,
    FullTrain,
}

/// Dummy columns produced for one categorical source column.
///
/// `levels[0]` is the dropped reference level; `levels[k]` (k ≥ 1) is encoded by
/// feature column `dummy_columns[k - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub column: String,
    pub levels: Vec<String>,
    pub dummy_columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub target: Vec<f64>,
    pub categorical_map: Vec<CategoricalEncoding>,
    /// Row indices into the source dataset.
    pub row_ids: Vec<usize>,
    pub partition: Partition,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        feature_names: Vec<String>,
        target: Vec<f64>,
        categorical_map: Vec<CategoricalEncoding>,
    ) -> Result<Self> {
        let n = features.nrows();
        let ds = Dataset {
            row_ids: (0..n).collect(),
            features,
            feature_names,
            target,
            categorical_map,
            partition: Partition::Source,
        };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        let (n, m) = self.features.shape();
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset must have at least one row and one column, got {n}x{m}"
            )));
        }
        if self.feature_names.len() != m {
            return Err(Error::Schema(format!(
                "{} feature names for {m} columns",
                self.feature_names.len()
            )));
        }
        if self.target.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} targets for {n} rows",
                self.target.len()
            )));
        }
        if let Some(pos) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature at row {}, column {}",
                pos % n,
                self.feature_names[pos / n]
            )));
        }
        if let Some(i) = self
            .target
            .iter()
            .position(|&t| !(t > 0.0 && t <= MAX_TARGET))
        {
            return Err(Error::InvalidInput(format!(
                "target {} at row {i} outside (0, {MAX_TARGET}]",
                self.target[i]
            )));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows `indices` (in that order) as a new dataset tagged `partition`.
    pub fn select_rows(&self, indices: &[usize], partition: Partition) -> Dataset {
        let m = self.n_features();
        let features = DMatrix::from_fn(indices.len(), m, |r, c| self.features[(indices[r], c)]);
        Dataset {
            features,
            feature_names: self.feature_names.clone(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            categorical_map: self.categorical_map.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
            partition,
        }
    }

    /// Stacks `self` on top of `other`.
    pub fn concat(&self, other: &Dataset, partition: Partition) -> Result<Dataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::Schema("cannot concatenate datasets with different columns".into()));
        }
        let (n1, n2, m) = (self.n_rows(), other.n_rows(), self.n_features());
        let features = DMatrix::from_fn(n1 + n2, m, |r, c| {
            if r < n1 {
                self.features[(r, c)]
            } else {
                other.features[(r - n1, c)]
            }
        });
        Ok(Dataset {
            features,
            feature_names: self.feature_names.clone(),
            target: self.target.iter().chain(&other.target).copied().collect(),
            categorical_map: self.categorical_map.clone(),
            row_ids: self.row_ids.iter().chain(&other.row_ids).copied().collect(),
            partition,
        })
    }

    /// Feature columns that are dummies of some categorical column.
    pub fn dummy_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self
            .categorical_map
            .iter()
            .flat_map(|enc| enc.dummy_columns.iter().copied())
            .collect();
        cols.sort_unstable();
        cols
    }

    /// Recovers the original label of categorical `column` for `row`.
    pub fn decode_category(&self, row: usize, column: &str) -> Option<&str> {
        let enc = self.categorical_map.iter().find(|e| e.column == column)?;
        let hot = enc
            .dummy_columns
            .iter()
            .position(|&c| self.features[(row, c)] == 1.0);
        Some(match hot {
            Some(k) => enc.levels[k + 1].as_str(),
            None => enc.levels[0].as_str(),
        })
    }

    /// Hex SHA-256 over shape, feature bytes and target bytes.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_rows() as u64).to_le_bytes());
        hasher.update((self.n_features() as u64).to_le_bytes());
        for name in &self.feature_names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        for v in self.features.iter().chain(&self.target) {
            hasher.update(v.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Refuses to hand out data tagged as the hold-out test partition.
    pub fn ensure_not_test(&self, purpose: &str) -> Result<()> {
        if self.partition == Partition::Test {
            return Err(Error::InvalidInput(format!(
                "test partition may not be used for {purpose}"
            )));
        }
        Ok(())
    }
}
