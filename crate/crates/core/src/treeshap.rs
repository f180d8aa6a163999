//! Exact path-dependent Shapley values for tree ensembles.
//!
//! The value of a feature coalition `S` is the cover-conditional expectation
//! of the margin: splits on features in `S` follow the row, splits on other
//! features average both children weighted by their cover ratio.
//! [`tree_shap`] computes these attributions in polynomial time with the
//! extend/unwind path-weight recursion; [`brute_force_shap`] enumerates
//! coalitions directly and exists to check it.

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::model::{ModelError, NodeKind, Tree, TreeEnsemble};

/// Upper bound on features accepted by [`brute_force_shap`].
pub const BRUTE_FORCE_MAX_FEATURES: usize = 20;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("dataset does not match model features: {0}")]
    Columns(#[from] DatasetError),
    #[error("brute-force enumeration supports at most {max} features, model has {got}")]
    TooManyFeatures { max: usize, got: usize },
}

/// Shapley values laid out `[row][feature][class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapMatrix {
    values: Vec<f64>,
    base_values: Vec<f64>,
    feature_names: Vec<String>,
    n_rows: usize,
    n_classes: usize,
}

impl ShapMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Expected margin per class with no feature known (base score included).
    pub fn base_values(&self) -> &[f64] {
        &self.base_values
    }

    #[inline]
    pub fn get(&self, row: usize, feature: usize, class: usize) -> f64 {
        self.values[(row * self.n_features() + feature) * self.n_classes + class]
    }

    /// All attributions of one row, `[feature][class]`.
    pub fn row(&self, row: usize) -> &[f64] {
        let stride = self.n_features() * self.n_classes;
        &self.values[row * stride..(row + 1) * stride]
    }

    /// Attributions of one feature for one class across all rows.
    pub fn column(&self, feature: usize, class: usize) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.get(r, feature, class))
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Attributions for a single row, `values` laid out `[feature][class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapRow {
    pub values: Vec<f64>,
    pub base_values: Vec<f64>,
}

/// Per-class expected margin: base score plus every tree's cover-weighted mean.
pub fn base_values(ensemble: &TreeEnsemble) -> Vec<f64> {
    let mut base = ensemble.base_score().to_vec();
    for tree in ensemble.trees() {
        base[tree.class_index] += tree.expected_value();
    }
    base
}

fn conditional_tree_value(tree: &Tree, node: usize, row: &[f64], fixed: &[bool]) -> f64 {
    let n = &tree.nodes()[node];
    match n.kind {
        NodeKind::Leaf { value } => value,
        NodeKind::Split {
            feature,
            left,
            right,
            ..
        } => {
            if fixed[feature] {
                conditional_tree_value(tree, tree.next_child(node, row), row, fixed)
            } else {
                let nodes = tree.nodes();
                (nodes[left].cover * conditional_tree_value(tree, left, row, fixed)
                    + nodes[right].cover * conditional_tree_value(tree, right, row, fixed))
                    / n.cover
            }
        }
    }
}

/// Expected margin of class `class` when only the features flagged in
/// `fixed` are known.
pub fn expected_margin_given_subset(
    ensemble: &TreeEnsemble,
    row: &[f64],
    fixed: &[bool],
    class: usize,
) -> Result<f64, ShapError> {
    ensemble.check_row(row)?;
    assert_eq!(fixed.len(), ensemble.n_features(), "subset mask length");
    let mut out = ensemble.base_score()[class];
    for tree in ensemble.trees().iter().filter(|t| t.class_index == class) {
        out += conditional_tree_value(tree, 0, row, fixed);
    }
    Ok(out)
}

/// Shapley values by explicit coalition enumeration, `O(2^n)` per row.
pub fn brute_force_shap(ensemble: &TreeEnsemble, row: &[f64]) -> Result<ShapRow, ShapError> {
    ensemble.check_row(row)?;
    let n = ensemble.n_features();
    if n > BRUTE_FORCE_MAX_FEATURES {
        return Err(ShapError::TooManyFeatures {
            max: BRUTE_FORCE_MAX_FEATURES,
            got: n,
        });
    }
    let k = ensemble.n_classes();
    // weight[s] = s! (n - s - 1)! / n!  =  1 / (n * C(n - 1, s))
    let weight: Vec<f64> = (0..n.max(1))
        .map(|s| {
            let mut binom = 1.0;
            for j in 0..s {
                binom = binom * (n - 1 - j) as f64 / (j + 1) as f64;
            }
            1.0 / (n as f64 * binom)
        })
        .collect();

    let n_subsets = 1usize << n;
    let mut values = vec![0.0; n * k];
    let mut mask = vec![false; n];
    let mut f = vec![0.0; n_subsets];
    for class in 0..k {
        for (s, fs) in f.iter_mut().enumerate() {
            for (i, m) in mask.iter_mut().enumerate() {
                *m = s >> i & 1 == 1;
            }
            *fs = expected_margin_given_subset(ensemble, row, &mask, class)?;
        }
        for i in 0..n {
            let bit = 1usize << i;
            let mut phi = 0.0;
            for s in (0..n_subsets).filter(|s| s & bit == 0) {
                phi += weight[s.count_ones() as usize] * (f[s | bit] - f[s]);
            }
            values[i * k + class] = phi;
        }
    }
    Ok(ShapRow {
        values,
        base_values: base_values(ensemble),
    })
}

const NO_FEATURE: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

impl Default for PathElement {
    fn default() -> Self {
        PathElement {
            feature: NO_FEATURE,
            zero_fraction: 0.0,
            one_fraction: 0.0,
            weight: 0.0,
        }
    }
}

fn extend_path(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: usize) {
    path[depth] = PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one_portion = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one_portion * d1 / ((i + 1) as f64 * one);
            next_one_portion = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

/// Total permutation weight of the path with element `index` removed.
fn unwound_path_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one_portion = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one_portion * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one_portion = path[i].weight - tmp * zero * ((depth - i) as f64 / d1);
        } else if zero != 0.0 {
            total += (path[i].weight / zero) / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct RowContext<'a> {
    tree: &'a Tree,
    row: &'a [f64],
    phi: &'a mut [f64],
    stride: usize,
    class: usize,
}

impl RowContext<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        parent: &[PathElement],
        scratch: &mut [PathElement],
        node: usize,
        zero: f64,
        one: f64,
        feature: usize,
    ) {
        let mut depth = parent.len();
        let (path, rest) = scratch.split_at_mut(depth + 1);
        path[..depth].copy_from_slice(parent);
        extend_path(path, depth, zero, one, feature);

        let tree = self.tree;
        let n = &tree.nodes()[node];
        match n.kind {
            NodeKind::Leaf { value } => {
                for i in 1..=depth {
                    let w = unwound_path_sum(path, depth, i);
                    let el = path[i];
                    self.phi[el.feature * self.stride + self.class] +=
                        w * (el.one_fraction - el.zero_fraction) * value;
                }
            }
            NodeKind::Split {
                feature: split,
                left,
                right,
                ..
            } => {
                let hot = tree.next_child(node, self.row);
                let cold = if hot == left { right } else { left };
                let mut incoming_zero = 1.0;
                let mut incoming_one = 1.0;
                // A feature appears at most once on the path: undo an earlier
                // split on the same feature before extending again.
                if let Some(k) = path[..=depth].iter().position(|e| e.feature == split) {
                    incoming_zero = path[k].zero_fraction;
                    incoming_one = path[k].one_fraction;
                    unwind_path(path, depth, k);
                    depth -= 1;
                }
                let nodes = tree.nodes();
                let hot_zero = nodes[hot].cover / n.cover * incoming_zero;
                let cold_zero = nodes[cold].cover / n.cover * incoming_zero;
                let parent = &path[..=depth];
                if hot_zero != 0.0 || incoming_one != 0.0 {
                    self.recurse(parent, rest, hot, hot_zero, incoming_one, split);
                }
                if cold_zero != 0.0 {
                    self.recurse(parent, rest, cold, cold_zero, 0.0, split);
                }
            }
        }
    }
}

/// Adds the attributions of one tree to `phi` (`[feature][class]` layout).
fn tree_shap_into(
    tree: &Tree,
    row: &[f64],
    phi: &mut [f64],
    stride: usize,
    scratch: &mut Vec<PathElement>,
) {
    let d = tree.depth();
    let need = (d + 2) * (d + 3) / 2;
    if scratch.len() < need {
        scratch.resize(need, PathElement::default());
    }
    let mut ctx = RowContext {
        tree,
        row,
        phi,
        stride,
        class: tree.class_index,
    };
    ctx.recurse(&[], scratch, 0, 1.0, 1.0, NO_FEATURE);
}

/// Path-dependent TreeSHAP for a single row.
pub fn tree_shap_row(ensemble: &TreeEnsemble, row: &[f64]) -> Result<ShapRow, ShapError> {
    ensemble.check_row(row)?;
    let k = ensemble.n_classes();
    let mut values = vec![0.0; ensemble.n_features() * k];
    let mut scratch = Vec::new();
    for tree in ensemble.trees() {
        tree_shap_into(tree, row, &mut values, k, &mut scratch);
    }
    Ok(ShapRow {
        values,
        base_values: base_values(ensemble),
    })
}

/// Path-dependent TreeSHAP over a row-major matrix with one column per model
/// feature. Rows are processed independently (in parallel on the current
/// rayon pool); the result does not depend on the number of workers.
pub fn tree_shap_matrix(ensemble: &TreeEnsemble, rows: &[f64]) -> ShapMatrix {
    let p = ensemble.n_features();
    let k = ensemble.n_classes();
    let stride = p * k;
    let n_rows = rows.len().checked_div(p).unwrap_or(0);
    assert_eq!(n_rows * p, rows.len(), "row-major matrix shape");
    let mut values = vec![0.0; n_rows * stride];
    if stride > 0 {
        values
            .par_chunks_mut(stride)
            .zip(rows.par_chunks(p))
            .for_each_init(Vec::new, |scratch, (phi, row)| {
                for tree in ensemble.trees() {
                    tree_shap_into(tree, row, phi, k, scratch);
                }
            });
    }
    ShapMatrix {
        values,
        base_values: base_values(ensemble),
        feature_names: ensemble.feature_names().to_vec(),
        n_rows,
        n_classes: k,
    }
}

/// Path-dependent TreeSHAP for every row of `data`. Columns are matched to
/// the model's features by name; extra columns are ignored.
pub fn tree_shap(ensemble: &TreeEnsemble, data: &Dataset) -> Result<ShapMatrix, ShapError> {
    let rows = data.row_major(ensemble.feature_names())?;
    let mut m = tree_shap_matrix(ensemble, &rows);
    m.n_rows = data.n_rows();
    Ok(m)
}
