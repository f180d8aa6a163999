//! Tree-ensemble model: JSON schema, validation and margin prediction.
//!
//! Trees use the split rule `left iff x < threshold`; a missing value (NaN)
//! follows the node's `missing` branch. Node covers must be additive so the
//! cover ratios can serve as branch probabilities for TreeSHAP.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for `cover(left) + cover(right) == cover(node)`.
pub const COVER_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation{}: {msg}", Location::fmt_opt(*.tree, *.node))]
    Schema {
        tree: Option<usize>,
        node: Option<u64>,
        msg: String,
    },
    #[error(
        "cover mismatch in tree {tree}, node {node}: children sum to {children} but node cover is {cover}"
    )]
    Cover {
        tree: usize,
        node: u64,
        cover: f64,
        children: f64,
    },
    #[error(
        "tree {tree}, node {node}: split feature {feature} out of range ({n_features} features)"
    )]
    FeatureOutOfRange {
        tree: usize,
        node: u64,
        feature: usize,
        n_features: usize,
    },
    #[error("row has {got} values but the model expects {expected}")]
    RowLength { expected: usize, got: usize },
}

struct Location;

impl Location {
    fn fmt_opt(tree: Option<usize>, node: Option<u64>) -> String {
        match (tree, node) {
            (Some(t), Some(n)) => format!(" in tree {t}, node {n}"),
            (Some(t), None) => format!(" in tree {t}"),
            _ => String::new(),
        }
    }
}

fn schema(tree: Option<usize>, node: Option<u64>, msg: impl Into<String>) -> ModelError {
    ModelError::Schema {
        tree,
        node,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Regression,
    BinaryLogistic,
    MulticlassSoftmax,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Regression => "regression",
            Objective::BinaryLogistic => "binary_logistic",
            Objective::MulticlassSoftmax => "multiclass_softmax",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        missing: Branch,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub cover: f64,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn leaf(value: f64, cover: f64) -> Self {
        TreeNode {
            cover,
            kind: NodeKind::Leaf { value },
        }
    }

    pub fn split(
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        missing: Branch,
        cover: f64,
    ) -> Self {
        TreeNode {
            cover,
            kind: NodeKind::Split {
                feature,
                threshold,
                left,
                right,
                missing,
            },
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// A single binary tree. Nodes are stored densely with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub class_index: usize,
    nodes: Vec<TreeNode>,
}

impl Tree {
    /// Builds a tree from dense nodes (root at index 0) without validation.
    /// Use [`TreeEnsemble::new`] to validate.
    pub fn from_nodes(class_index: usize, nodes: Vec<TreeNode>) -> Self {
        Tree { class_index, nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Child index the row follows at split node `node`.
    #[inline]
    pub fn next_child(&self, node: usize, row: &[f64]) -> usize {
        match self.nodes[node].kind {
            NodeKind::Split {
                feature,
                threshold,
                left,
                right,
                missing,
            } => {
                let v = row[feature];
                if v.is_nan() {
                    match missing {
                        Branch::Left => left,
                        Branch::Right => right,
                    }
                } else if v < threshold {
                    left
                } else {
                    right
                }
            }
            NodeKind::Leaf { .. } => node,
        }
    }

    /// Leaf value reached by `row`.
    #[inline]
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx].kind {
                NodeKind::Leaf { value } => return value,
                NodeKind::Split { .. } => idx = self.next_child(idx, row),
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(tree: &Tree, idx: usize) -> usize {
            match tree.nodes[idx].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Split { left, right, .. } => 1 + walk(tree, left).max(walk(tree, right)),
            }
        }
        walk(self, 0)
    }

    /// Cover-weighted mean leaf value, i.e. the tree's expected output when no
    /// feature is known.
    pub fn expected_value(&self) -> f64 {
        fn walk(tree: &Tree, idx: usize) -> f64 {
            let node = &tree.nodes[idx];
            match node.kind {
                NodeKind::Leaf { value } => value,
                NodeKind::Split { left, right, .. } => {
                    let l = &tree.nodes[left];
                    let r = &tree.nodes[right];
                    (l.cover * walk(tree, left) + r.cover * walk(tree, right)) / node.cover
                }
            }
        }
        walk(self, 0)
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n.kind {
            NodeKind::Split { feature, .. } => Some(feature),
            NodeKind::Leaf { .. } => None,
        })
    }
}

/// An immutable, validated forest producing per-class margin scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    feature_names: Vec<String>,
    n_classes: usize,
    objective: Objective,
    base_score: Vec<f64>,
    trees: Vec<Tree>,
}

impl TreeEnsemble {
    /// Validates and assembles an ensemble.
    pub fn new(
        feature_names: Vec<String>,
        objective: Objective,
        base_score: Vec<f64>,
        trees: Vec<Tree>,
    ) -> Result<Self, ModelError> {
        let n_classes = base_score.len();
        let ensemble = TreeEnsemble {
            feature_names,
            n_classes,
            objective,
            base_score,
            trees,
        };
        ensemble.validate()?;
        Ok(ensemble)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn base_score(&self) -> &[f64] {
        &self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Features referenced by at least one split of a tree of class `class`.
    pub fn used_features(&self, class: usize) -> Vec<bool> {
        let mut used = vec![false; self.n_features()];
        for tree in self.trees.iter().filter(|t| t.class_index == class) {
            for f in tree.split_features() {
                used[f] = true;
            }
        }
        used
    }

    /// Margin-space score per class.
    pub fn predict_margin(&self, row: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_row(row)?;
        let mut out = self.base_score.clone();
        for tree in &self.trees {
            out[tree.class_index] += tree.leaf_value(row);
        }
        Ok(out)
    }

    pub(crate) fn check_row(&self, row: &[f64]) -> Result<(), ModelError> {
        if row.len() != self.n_features() {
            return Err(ModelError::RowLength {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ModelError> {
        let k = self.n_classes;
        if k == 0 {
            return Err(schema(
                None,
                None,
                "base_score must have at least one entry",
            ));
        }
        match self.objective {
            Objective::Regression | Objective::BinaryLogistic if k != 1 => {
                return Err(schema(
                    None,
                    None,
                    format!(
                        "objective {} requires n_classes = 1, got {k}",
                        self.objective
                    ),
                ));
            }
            Objective::MulticlassSoftmax if k < 2 => {
                return Err(schema(
                    None,
                    None,
                    "objective multiclass_softmax requires n_classes >= 2",
                ));
            }
            _ => {}
        }
        if self.base_score.iter().any(|b| !b.is_finite()) {
            return Err(schema(None, None, "base_score entries must be finite"));
        }
        let n_features = self.n_features();
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.class_index >= k {
                return Err(schema(
                    Some(t),
                    None,
                    format!("class_index {} >= n_classes {k}", tree.class_index),
                ));
            }
            if tree.nodes.is_empty() {
                return Err(schema(Some(t), None, "tree has no nodes"));
            }
            if !(tree.nodes[0].cover > 0.0) {
                return Err(schema(Some(t), Some(0), "root cover must be positive"));
            }
            let mut parents = vec![0usize; tree.nodes.len()];
            for (id, node) in tree.nodes.iter().enumerate() {
                let nid = id as u64;
                if !node.cover.is_finite() || node.cover < 0.0 {
                    return Err(schema(
                        Some(t),
                        Some(nid),
                        "cover must be finite and nonnegative",
                    ));
                }
                match node.kind {
                    NodeKind::Leaf { value } => {
                        if !value.is_finite() {
                            return Err(schema(Some(t), Some(nid), "leaf value must be finite"));
                        }
                    }
                    NodeKind::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => {
                        if feature >= n_features {
                            return Err(ModelError::FeatureOutOfRange {
                                tree: t,
                                node: nid,
                                feature,
                                n_features,
                            });
                        }
                        if threshold.is_nan() {
                            return Err(schema(Some(t), Some(nid), "threshold must not be NaN"));
                        }
                        if !(node.cover > 0.0) {
                            return Err(schema(
                                Some(t),
                                Some(nid),
                                "internal node cover must be positive",
                            ));
                        }
                        for child in [left, right] {
                            if child >= tree.nodes.len() || child == 0 {
                                return Err(schema(
                                    Some(t),
                                    Some(nid),
                                    format!("bad child id {child}"),
                                ));
                            }
                            parents[child] += 1;
                        }
                        if left == right {
                            return Err(schema(
                                Some(t),
                                Some(nid),
                                "left and right child coincide",
                            ));
                        }
                        let children = tree.nodes[left].cover + tree.nodes[right].cover;
                        if (children - node.cover).abs() > COVER_TOLERANCE * node.cover {
                            return Err(ModelError::Cover {
                                tree: t,
                                node: nid,
                                cover: node.cover,
                                children,
                            });
                        }
                    }
                }
            }
            if let Some(bad) = parents.iter().skip(1).position(|&p| p != 1) {
                return Err(schema(
                    Some(t),
                    Some(bad as u64 + 1),
                    format!(
                        "node has {} parents, expected exactly one",
                        parents[bad + 1]
                    ),
                ));
            }
            // Every non-root node having one parent and the root none still
            // permits a detached cycle; a walk from the root must reach all nodes.
            let mut seen = vec![false; tree.nodes.len()];
            let mut stack = vec![0usize];
            while let Some(i) = stack.pop() {
                if std::mem::replace(&mut seen[i], true) {
                    return Err(schema(Some(t), Some(i as u64), "cycle detected"));
                }
                if let NodeKind::Split { left, right, .. } = tree.nodes[i].kind {
                    stack.push(left);
                    stack.push(right);
                }
            }
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(schema(
                    Some(t),
                    Some(i as u64),
                    "node unreachable from root",
                ));
            }
        }
        Ok(())
    }

    /// Parses and validates a model JSON document.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ModelError> {
        let raw: RawModel = serde_json::from_slice(bytes)?;
        raw.into_ensemble()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RawModel::from(self)).expect("model serialization")
    }
}

/// Parses and validates a model JSON document.
pub fn parse_model(bytes: &[u8]) -> Result<TreeEnsemble, ModelError> {
    TreeEnsemble::from_json(bytes)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    feature_names: Vec<String>,
    n_classes: usize,
    objective: Objective,
    base_score: Vec<f64>,
    trees: Vec<RawTree>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTree {
    class_index: usize,
    nodes: Vec<RawNode>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split_feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    left: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    missing: Option<Branch>,
    cover: f64,
}

impl RawModel {
    fn into_ensemble(self) -> Result<TreeEnsemble, ModelError> {
        if self.base_score.len() != self.n_classes {
            return Err(schema(
                None,
                None,
                format!(
                    "base_score has {} entries but n_classes is {}",
                    self.base_score.len(),
                    self.n_classes
                ),
            ));
        }
        let trees = self
            .trees
            .into_iter()
            .enumerate()
            .map(|(t, raw)| raw.into_tree(t))
            .collect::<Result<Vec<_>, _>>()?;
        TreeEnsemble::new(self.feature_names, self.objective, self.base_score, trees)
    }
}

impl RawTree {
    fn into_tree(self, t: usize) -> Result<Tree, ModelError> {
        let mut position = HashMap::with_capacity(self.nodes.len());
        for (pos, node) in self.nodes.iter().enumerate() {
            if position.insert(node.id, pos).is_some() {
                return Err(schema(Some(t), Some(node.id), "duplicate node id"));
            }
        }
        if !position.contains_key(&0) {
            return Err(schema(Some(t), None, "missing root node (id 0)"));
        }
        // Renumber breadth-first from the root so stored indices are dense.
        let mut order: Vec<u64> = vec![0];
        let mut dense: HashMap<u64, usize> = HashMap::from([(0, 0)]);
        let mut i = 0;
        while i < order.len() {
            let raw = &self.nodes[position[&order[i]]];
            if raw.leaf.is_none() {
                for child in [raw.left, raw.right].into_iter().flatten() {
                    if !position.contains_key(&child) {
                        return Err(schema(
                            Some(t),
                            Some(raw.id),
                            format!("bad child id {child}"),
                        ));
                    }
                    if dense.contains_key(&child) {
                        return Err(schema(
                            Some(t),
                            Some(child),
                            "node reached twice (cycle or shared child)",
                        ));
                    }
                    dense.insert(child, order.len());
                    order.push(child);
                }
            }
            i += 1;
        }
        if order.len() != self.nodes.len() {
            let orphan = self
                .nodes
                .iter()
                .find(|n| !dense.contains_key(&n.id))
                .map(|n| n.id);
            return Err(schema(Some(t), orphan, "node unreachable from root"));
        }
        let nodes = order
            .iter()
            .map(|id| {
                let raw = &self.nodes[position[id]];
                raw.to_node(t, &dense)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tree::from_nodes(self.class_index, nodes))
    }
}

impl RawNode {
    fn to_node(&self, t: usize, dense: &HashMap<u64, usize>) -> Result<TreeNode, ModelError> {
        let split_fields = [
            self.split_feature.is_some(),
            self.threshold.is_some(),
            self.left.is_some(),
            self.right.is_some(),
            self.missing.is_some(),
        ];
        match self.leaf {
            Some(value) => {
                if split_fields.iter().any(|&f| f) {
                    return Err(schema(
                        Some(t),
                        Some(self.id),
                        "leaf node carries split fields",
                    ));
                }
                Ok(TreeNode::leaf(value, self.cover))
            }
            None => {
                let names = ["split_feature", "threshold", "left", "right", "missing"];
                if let Some(i) = split_fields.iter().position(|&f| !f) {
                    return Err(schema(
                        Some(t),
                        Some(self.id),
                        format!("missing field `{}`", names[i]),
                    ));
                }
                Ok(TreeNode::split(
                    self.split_feature.unwrap(),
                    self.threshold.unwrap(),
                    dense[&self.left.unwrap()],
                    dense[&self.right.unwrap()],
                    self.missing.unwrap(),
                    self.cover,
                ))
            }
        }
    }
}

impl From<&TreeEnsemble> for RawModel {
    fn from(e: &TreeEnsemble) -> Self {
        RawModel {
            feature_names: e.feature_names.clone(),
            n_classes: e.n_classes,
            objective: e.objective,
            base_score: e.base_score.clone(),
            trees: e
                .trees
                .iter()
                .map(|tree| RawTree {
                    class_index: tree.class_index,
                    nodes: tree
                        .nodes
                        .iter()
                        .enumerate()
                        .map(|(id, node)| match node.kind {
                            NodeKind::Leaf { value } => RawNode {
                                id: id as u64,
                                leaf: Some(value),
                                split_feature: None,
                                threshold: None,
                                left: None,
                                right: None,
                                missing: None,
                                cover: node.cover,
                            },
                            NodeKind::Split {
                                feature,
                                threshold,
                                left,
                                right,
                                missing,
                            } => RawNode {
                                id: id as u64,
                                leaf: None,
                                split_feature: Some(feature),
                                threshold: Some(threshold),
                                left: Some(left as u64),
                                right: Some(right as u64),
                                missing: Some(missing),
                                cover: node.cover,
                            },
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}
