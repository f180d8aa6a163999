//! Backward elimination over Shapley-value regressors.
//!
//! Each iteration regresses the target on the Shapley columns of the
//! remaining features and removes the feature with the lowest signed t-value
//! (ties: lexicographically last name). A feature's statistics are frozen at
//! the iteration that removes it. The loop runs until no feature is left, so
//! one elimination serves every selection threshold.

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::model::TreeEnsemble;
use crate::stats::{
    distinct_values, fit_logistic, fit_ols, infer_task, two_sided_normal_p, RegressionResult,
    StatsError, TaskKind, DEFAULT_L1_WEIGHT,
};
use crate::treeshap::{tree_shap, ShapError, ShapMatrix};

use nalgebra::DMatrix;

pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("threshold must be in (0,1], got {0}")]
    Threshold(f64),
    #[error("L1 weight must be finite and nonnegative, got {0}")]
    L1Weight(f64),
    #[error("too few rows: {rows} validation rows for {features} features (need at least {})", features + 2)]
    TooFewRows { rows: usize, features: usize },
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Shap(#[from] ShapError),
    #[error("target: {0}")]
    Target(StatsError),
    #[error("task {task} does not match a model with {model_classes} class output(s)")]
    TaskMismatch {
        task: TaskKind,
        model_classes: usize,
    },
    #[error("multiclass labels must be integers in 0..{n_classes}, found {value}")]
    BadLabel { value: f64, n_classes: usize },
    #[error("regression failed at elimination iteration {iteration} ({remaining} features left): {source}")]
    Regression {
        iteration: usize,
        remaining: usize,
        source: StatsError,
    },
    #[error("per-class results disagree on the number of features")]
    InconsistentClasses,
    #[error("multiclass aggregation needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
}

/// Options for [`shap_select`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectOptions {
    pub threshold: f64,
    /// `None` infers the task from the target.
    pub task: Option<TaskKind>,
    /// L1 weight of the significance regressions.
    pub l1_weight: f64,
    /// Echoed into the report; the procedure is deterministic.
    pub seed: u64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            threshold: DEFAULT_THRESHOLD,
            task: None,
            l1_weight: DEFAULT_L1_WEIGHT,
            seed: 0,
        }
    }
}

/// Statistics of one feature, taken from the iteration that removed it.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminationRecord {
    pub feature: String,
    /// 1 = removed first (least useful).
    pub removal_rank: usize,
    /// Signed t (z for logistic); for multiclass the maximum over classes.
    pub t_value: f64,
    pub coefficient_sign: i8,
    pub p_raw: f64,
    /// Equal to `p_raw` for a single output; `min(1, K·p_raw)` for K classes.
    pub p_adjusted: f64,
    pub class_of_max_t: Option<usize>,
}

impl EliminationRecord {
    pub fn is_selected(&self, threshold: f64) -> bool {
        self.coefficient_sign == 1 && (self.p_adjusted < threshold || threshold >= 1.0)
    }
}

/// Threshold-independent outcome of the elimination loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub task: TaskKind,
    /// Ordered by removal rank.
    pub records: Vec<EliminationRecord>,
    /// Number of regressions fitted at each iteration.
    pub fits_per_iteration: Vec<usize>,
}

impl Elimination {
    /// Positive, significant features, most significant (last removed) first.
    pub fn select(&self, threshold: f64) -> Vec<String> {
        self.records
            .iter()
            .rev()
            .filter(|r| r.is_selected(threshold))
            .map(|r| r.feature.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub task: TaskKind,
    pub threshold: f64,
    pub records: Vec<EliminationRecord>,
    pub selected: Vec<String>,
    pub options: SelectOptions,
    /// Requested task as given (`None` = auto).
    pub requested_task: Option<TaskKind>,
}

/// Per-feature outcome of merging per-class regressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAggregate {
    pub t_max: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub sign: i8,
    pub class_of_max_t: usize,
}

/// Merges one-vs-rest results: the largest signed t across classes, with a
/// Bonferroni factor of K on its two-sided normal p-value. Features whose
/// largest t is not positive are marked negative (or zero when every class
/// zeroed the coefficient) with `p_adjusted = 1`.
pub fn aggregate_multiclass(
    per_class: &[RegressionResult],
) -> Result<Vec<ClassAggregate>, SelectionError> {
    let k = per_class.len();
    if k < 2 {
        return Err(SelectionError::TooFewClasses(k));
    }
    let p = per_class[0].t_values.len();
    if per_class
        .iter()
        .any(|r| r.t_values.len() != p || r.coefficients.len() != p)
    {
        return Err(SelectionError::InconsistentClasses);
    }
    Ok((0..p)
        .map(|j| {
            let mut class_of_max_t = 0;
            for c in 1..k {
                if per_class[c].t_values[j] > per_class[class_of_max_t].t_values[j] {
                    class_of_max_t = c;
                }
            }
            let t_max = per_class[class_of_max_t].t_values[j];
            let p_raw = two_sided_normal_p(t_max);
            if t_max > 0.0 {
                ClassAggregate {
                    t_max,
                    p_raw,
                    p_adjusted: (k as f64 * p_raw).min(1.0),
                    sign: 1,
                    class_of_max_t,
                }
            } else {
                let all_zero = per_class.iter().all(|r| r.coefficients[j] == 0.0);
                ClassAggregate {
                    t_max,
                    p_raw,
                    p_adjusted: 1.0,
                    sign: if all_zero { 0 } else { -1 },
                    class_of_max_t,
                }
            }
        })
        .collect())
}

/// Statistics used to rank one feature within an iteration.
#[derive(Debug, Clone, Copy)]
struct FeatureStat {
    t: f64,
    sign: i8,
    p_raw: f64,
    p_adjusted: f64,
    class: Option<usize>,
}

fn single_output_stats(r: &RegressionResult) -> Vec<FeatureStat> {
    (0..r.coefficients.len())
        .map(|j| {
            let sign = r.coefficient_sign(j);
            let (t, p) = if sign == 0 {
                (0.0, 1.0)
            } else {
                (r.t_values[j], r.p_values[j])
            };
            FeatureStat {
                t,
                sign,
                p_raw: p,
                p_adjusted: p,
                class: None,
            }
        })
        .collect()
}

/// Response vector(s) for the task: one per class for multiclass.
fn responses(y: &[f64], task: TaskKind) -> Result<Vec<Vec<f64>>, SelectionError> {
    match task {
        TaskKind::Regression => Ok(vec![y.to_vec()]),
        TaskKind::Binary => {
            let distinct = distinct_values(y);
            if distinct.len() != 2 {
                return Err(SelectionError::Target(if distinct.len() < 2 {
                    StatsError::DegenerateTarget
                } else {
                    StatsError::NotBinary
                }));
            }
            let positive = distinct[1];
            Ok(vec![y
                .iter()
                .map(|&v| if v == positive { 1.0 } else { 0.0 })
                .collect()])
        }
        TaskKind::Multiclass { n_classes } => {
            if let Some(&bad) = y
                .iter()
                .find(|&&v| v < 0.0 || v.fract() != 0.0 || v >= n_classes as f64)
            {
                return Err(SelectionError::BadLabel {
                    value: bad,
                    n_classes,
                });
            }
            Ok((0..n_classes)
                .map(|c| {
                    y.iter()
                        .map(|&v| if v as usize == c { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect())
        }
    }
}

/// Runs the elimination loop on precomputed Shapley values.
pub fn eliminate(
    shap: &ShapMatrix,
    target: &[f64],
    task: TaskKind,
    l1_weight: f64,
) -> Result<Elimination, SelectionError> {
    let n = shap.n_rows();
    let names = shap.feature_names();
    if task.n_classes() != shap.n_classes() {
        return Err(SelectionError::TaskMismatch {
            task,
            model_classes: shap.n_classes(),
        });
    }
    if n < names.len() + 2 {
        return Err(SelectionError::TooFewRows {
            rows: n,
            features: names.len(),
        });
    }
    let responses = responses(target, task)?;

    // Regressor order is by name so results do not depend on column order.
    let mut remaining: Vec<usize> = (0..names.len()).collect();
    remaining.sort_by(|&a, &b| names[a].cmp(&names[b]));

    let mut removed: Vec<EliminationRecord> = Vec::with_capacity(names.len());
    let mut fits_per_iteration = Vec::with_capacity(names.len());
    let mut iteration = 0;
    while !remaining.is_empty() {
        iteration += 1;
        let fail = |source| SelectionError::Regression {
            iteration,
            remaining: remaining.len(),
            source,
        };
        let design = |class: usize| {
            DMatrix::from_fn(n, remaining.len(), |r, j| shap.get(r, remaining[j], class))
        };
        let stats = match task {
            TaskKind::Regression => {
                fits_per_iteration.push(1);
                single_output_stats(&fit_ols(&design(0), &responses[0], l1_weight).map_err(fail)?)
            }
            TaskKind::Binary => {
                fits_per_iteration.push(1);
                single_output_stats(
                    &fit_logistic(&design(0), &responses[0], l1_weight).map_err(fail)?,
                )
            }
            TaskKind::Multiclass { n_classes } => {
                fits_per_iteration.push(n_classes);
                let per_class = (0..n_classes)
                    .into_par_iter()
                    .map(|c| fit_logistic(&design(c), &responses[c], l1_weight))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(fail)?;
                aggregate_multiclass(&per_class)?
                    .into_iter()
                    .map(|a| FeatureStat {
                        t: if a.sign == 0 { 0.0 } else { a.t_max },
                        sign: a.sign,
                        p_raw: a.p_raw,
                        p_adjusted: a.p_adjusted,
                        class: Some(a.class_of_max_t),
                    })
                    .collect()
            }
        };
        let worst = (0..remaining.len())
            .min_by(|&a, &b| {
                stats[a]
                    .t
                    .total_cmp(&stats[b].t)
                    .then_with(|| names[remaining[b]].cmp(&names[remaining[a]]))
            })
            .expect("non-empty");
        let s = stats[worst];
        removed.push(EliminationRecord {
            feature: names[remaining[worst]].clone(),
            removal_rank: iteration,
            t_value: s.t,
            coefficient_sign: s.sign,
            p_raw: s.p_raw,
            p_adjusted: s.p_adjusted,
            class_of_max_t: s.class,
        });
        remaining.remove(worst);
    }
    Ok(Elimination {
        task,
        records: removed,
        fits_per_iteration,
    })
}

fn check_options(options: &SelectOptions) -> Result<(), SelectionError> {
    check_threshold(options.threshold)?;
    if !(options.l1_weight >= 0.0 && options.l1_weight.is_finite()) {
        return Err(SelectionError::L1Weight(options.l1_weight));
    }
    Ok(())
}

pub fn check_threshold(threshold: f64) -> Result<(), SelectionError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SelectionError::Threshold(threshold));
    }
    Ok(())
}

/// Resolves the task and runs elimination on `validation`.
pub fn run_elimination(
    ensemble: &TreeEnsemble,
    validation: &Dataset,
    options: &SelectOptions,
) -> Result<Elimination, SelectionError> {
    check_options(options)?;
    let target = validation.target()?;
    let features = ensemble.n_features();
    if validation.n_rows() < features + 2 {
        return Err(SelectionError::TooFewRows {
            rows: validation.n_rows(),
            features,
        });
    }
    let inferred = infer_task(target).map_err(SelectionError::Target)?;
    // An inferred class count comes from the labels present; the model's
    // output count wins when both say multiclass.
    let task = match (options.task, inferred) {
        (Some(task), _) => task,
        (None, TaskKind::Multiclass { .. }) if ensemble.n_classes() > 2 => TaskKind::Multiclass {
            n_classes: ensemble.n_classes(),
        },
        (None, inferred) => inferred,
    };
    if task.n_classes() != ensemble.n_classes() {
        return Err(SelectionError::TaskMismatch {
            task,
            model_classes: ensemble.n_classes(),
        });
    }
    let shap = tree_shap(ensemble, validation)?;
    eliminate(&shap, target, task, options.l1_weight)
}

/// Shapley-value feature selection: Shapley values on `validation`,
/// backward elimination, then thresholding of the recorded p-values.
pub fn shap_select(
    ensemble: &TreeEnsemble,
    validation: &Dataset,
    options: &SelectOptions,
) -> Result<SelectionReport, SelectionError> {
    let elimination = run_elimination(ensemble, validation, options)?;
    Ok(SelectionReport::from_elimination(elimination, options))
}

impl SelectionReport {
    pub fn from_elimination(elimination: Elimination, options: &SelectOptions) -> Self {
        SelectionReport {
            task: elimination.task,
            threshold: options.threshold,
            selected: elimination.select(options.threshold),
            records: elimination.records,
            options: options.clone(),
            requested_task: options.task,
        }
    }

    pub fn record(&self, feature: &str) -> Option<&EliminationRecord> {
        self.records.iter().find(|r| r.feature == feature)
    }
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub selected: Vec<String>,
    pub metric: Option<f64>,
}

impl SweepRow {
    pub fn n_selected(&self) -> usize {
        self.selected.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub elimination: Elimination,
    pub rows: Vec<SweepRow>,
}

impl ThresholdSweep {
    /// Fills each row's metric by calling `score` on its selected features.
    pub fn score_with<E>(
        &mut self,
        mut score: impl FnMut(&[String]) -> Result<f64, E>,
    ) -> Result<(), E> {
        for row in &mut self.rows {
            row.metric = Some(score(&row.selected)?);
        }
        Ok(())
    }
}

/// Eliminates once, then applies every threshold to the same records.
pub fn threshold_sweep(
    ensemble: &TreeEnsemble,
    validation: &Dataset,
    options: &SelectOptions,
    thresholds: &[f64],
) -> Result<ThresholdSweep, SelectionError> {
    for &t in thresholds {
        check_threshold(t)?;
    }
    let elimination = run_elimination(ensemble, validation, options)?;
    let rows = thresholds
        .iter()
        .map(|&threshold| SweepRow {
            threshold,
            selected: elimination.select(threshold),
            metric: None,
        })
        .collect();
    Ok(ThresholdSweep { elimination, rows })
}
