//! Feature selection for tree ensembles by regressing the target on
//! per-feature Shapley values.
//!
//! The pipeline: compute exact path-dependent Shapley values of a trained
//! [`TreeEnsemble`] on a validation set ([`treeshap`]), regress the target on
//! them (OLS for regression, logistic for classification, see [`stats`]),
//! then repeatedly drop the feature with the lowest t-value and keep those
//! whose coefficients are positive and significant ([`selection`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod gbdt;
pub mod model;
pub mod report;
pub mod selection;
pub mod stats;
pub mod synth;
pub mod treeshap;

pub use dataset::{Dataset, DatasetError};
pub use gbdt::{evaluate, train_gbdt, Metric, TrainConfig, TrainError};
pub use model::{
    parse_model, Branch, ModelError, NodeKind, Objective, Tree, TreeEnsemble, TreeNode,
};
pub use report::{
    format_float, validate_report_json, validate_shap_csv, validate_sweep_csv, SchemaError,
};
pub use selection::{
    aggregate_multiclass, eliminate, shap_select, threshold_sweep, Elimination, EliminationRecord,
    SelectOptions, SelectionError, SelectionReport, SweepRow, ThresholdSweep,
};
pub use stats::{fit_logistic, fit_ols, infer_task, Dof, RegressionResult, StatsError, TaskKind};
pub use treeshap::{
    brute_force_shap, expected_margin_given_subset, tree_shap, tree_shap_row, ShapError,
    ShapMatrix, ShapRow,
};
