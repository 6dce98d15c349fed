use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Partition};
use crate::error::{Error, Result};

/// Share of rows held out for testing.
pub const TEST_FRACTION: f64 = 0.30;
/// Share of the training rows used as the actual training set (ATS).
pub const ATS_FRACTION: f64 = 4.0 / 7.0;

const MIN_ROWS: usize = 10;

/// Center/scale parameters estimated on the ATS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub columns: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Columns left untouched because their ATS variance is zero.
    pub flagged: Vec<usize>,
}

impl Standardizer {
    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        for ((&c, &mean), &sd) in self.columns.iter().zip(&self.means).zip(&self.sds) {
            for v in out.features.column_mut(c).iter_mut() {
                *v = (*v - mean) / sd;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DataSplits {
    pub ats: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    /// ATS followed by validation rows.
    pub full_train: Dataset,
    pub seed: u64,
    pub standardizer: Option<Standardizer>,
}

/// Random 70/30 train/test split, with the training part cut 4:3 into ATS and
/// validation. The test size is floored; the ATS size is floored within training.
pub fn split(dataset: &Dataset, seed: u64) -> Result<DataSplits> {
    let n = dataset.n_rows();
    if n < MIN_ROWS {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_ROWS} rows to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_test = (n as f64 * TEST_FRACTION).floor() as usize;
    let n_train = n - n_test;
    let n_ats = (n_train as f64 * ATS_FRACTION).floor() as usize;

    let ats = dataset.select_rows(&order[..n_ats], Partition::Ats);
    let validation = dataset.select_rows(&order[n_ats..n_train], Partition::Validation);
    let test = dataset.select_rows(&order[n_train..], Partition::Test);
    let full_train = ats.concat(&validation, Partition::FullTrain)?;
    Ok(DataSplits {
        ats,
        validation,
        test,
        full_train,
        seed,
        standardizer: None,
    })
}

/// Standardizes every non-dummy feature with ATS means and standard deviations
/// and applies the same transform to the other partitions.
pub fn standardize(splits: &DataSplits) -> Result<DataSplits> {
    if splits.ats.partition != Partition::Ats {
        return Err(Error::InvalidInput(
            "standardization statistics must come from the ATS".into(),
        ));
    }
    let ats = &splits.ats;
    let dummies = ats.dummy_columns();
    let n = ats.n_rows() as f64;
    let mut st = Standardizer {
        columns: Vec::new(),
        means: Vec::new(),
        sds: Vec::new(),
        flagged: Vec::new(),
    };
    for c in (0..ats.n_features()).filter(|c| !dummies.contains(c)) {
        let col = ats.features.column(c);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 1e-12 * mean.abs().max(1.0) {
            st.columns.push(c);
            st.means.push(mean);
            st.sds.push(sd);
        } else {
            log::warn!("column '{}' has zero variance on the ATS; left unscaled", ats.feature_names[c]);
            st.flagged.push(c);
        }
    }
    Ok(DataSplits {
        ats: st.apply(&splits.ats),
        validation: st.apply(&splits.validation),
        test: st.apply(&splits.test),
        full_train: st.apply(&splits.full_train),
        seed: splits.seed,
        standardizer: Some(st),
    })
}
