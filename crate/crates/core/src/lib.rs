//! Engine for augmenting a labeled base table with features discovered in a
//! repository of candidate foreign tables.
//!
//! The pipeline joins candidate tables onto the base table (hard keys, soft
//! nearest-neighbor keys, interpolated and time-resampled keys), prunes the
//! resulting feature explosion with random-injection feature selection, and
//! reports whether the augmentation actually improved a predictive model.
//!
//! Modules follow the pipeline stages:
//!
//! - [`tabular`]: columnar tables, CSV ingestion, imputation, binarization
//! - [`coreset`]: row reduction (uniform / stratified sampling, OSNAP sketch)
//! - [`join`]: left joins, soft joins, time resampling, join planning
//! - [`estimators`]: random forest and linear baseline models
//! - [`ranking`]: forest-importance and sparse-regression feature rankings
//! - [`selection`]: noise-injection selection, baselines, search wrappers
//! - [`pipeline`]: end-to-end orchestration, config, manifest, run report

pub mod coreset;
pub mod error;
pub mod estimators;
pub mod join;
pub mod linalg;
pub mod pipeline;
pub mod ranking;
pub mod rng;
pub mod selection;
pub mod tabular;

pub use error::{CoreError, Result};
pub use tabular::{Column, ColumnData, FeatureMatrix, Granularity, LabelVector, Table, Task};
