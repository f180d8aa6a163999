use std::fmt;

use super::StatsError;

/// Kind of supervised task, decided from the target values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Binary,
    Multiclass { n_classes: usize },
}

impl TaskKind {
    /// Number of per-class Shapley slices the task consumes.
    pub fn n_classes(self) -> usize {
        match self {
            TaskKind::Multiclass { n_classes } => n_classes,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Regression => "regression",
            TaskKind::Binary => "binary",
            TaskKind::Multiclass { .. } => "multiclass",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sorted distinct values of `y`.
pub fn distinct_values(y: &[f64]) -> Vec<f64> {
    let mut v = y.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Two distinct values: binary. Three to ten distinct integral values:
/// multiclass. Anything else: regression.
pub fn infer_task(y: &[f64]) -> Result<TaskKind, StatsError> {
    if y.is_empty() {
        return Err(StatsError::EmptyTarget);
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(StatsError::NonFinite("target"));
    }
    let distinct = distinct_values(y);
    Ok(match distinct.len() {
        1 => return Err(StatsError::DegenerateTarget),
        2 => TaskKind::Binary,
        k @ 3..=10 if distinct.iter().all(|v| v.fract() == 0.0) => {
            TaskKind::Multiclass { n_classes: k }
        }
        _ => TaskKind::Regression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules() {
        assert_eq!(infer_task(&[0.0, 1.0, 1.0, 0.0]).unwrap(), TaskKind::Binary);
        assert_eq!(
            infer_task(&[0.0, 1.0, 2.0, 2.0]).unwrap(),
            TaskKind::Multiclass { n_classes: 3 }
        );
        let floats: Vec<f64> = (0..100).map(|i| i as f64 * 0.37).collect();
        assert_eq!(infer_task(&floats).unwrap(), TaskKind::Regression);
        assert_eq!(infer_task(&[0.5, 1.5, 2.5]).unwrap(), TaskKind::Regression);
        let eleven: Vec<f64> = (0..11).map(f64::from).collect();
        assert_eq!(infer_task(&eleven).unwrap(), TaskKind::Regression);
        assert_eq!(
            infer_task(&[4.0, 4.0]).unwrap_err(),
            StatsError::DegenerateTarget
        );
        assert!(infer_task(&[]).is_err());
    }
}
