//! Forecasting under asymmetric error costs: cost functions, base learners,
//! quantile regression, asymmetric-loss neural networks, markdown correction
//! and cost-sensitive ensemble selection.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod markdown;
pub mod models;
pub mod seed;
pub mod verify;

pub use data::{DataSplits, Dataset};
pub use ensemble::{ensemble_predict, ensemble_select, simple_average, EnsembleModel};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ResultsTable};
pub use loss::{CostSpec, LossFamily};
pub use markdown::{apply_markdown, fit_markdown};
pub use models::{Model, ModelSpec};
