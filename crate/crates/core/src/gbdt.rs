//! Small second-order gradient-boosted tree trainer.
//!
//! Exact greedy splits over presorted feature values, level-wise growth,
//! leaf weights `-G / (H + λ)` scaled by the learning rate, learned default
//! direction for missing values. Node cover is the hessian mass, so trained
//! models satisfy the cover additivity required by TreeSHAP exactly.

use thiserror::Error;

use crate::dataset::Dataset;
use crate::model::{Branch, ModelError, NodeKind, Objective, Tree, TreeEnsemble, TreeNode};
use crate::stats::{distinct_values, infer_task, StatsError, TaskKind};

const MIN_HESSIAN: f64 = 1e-16;
const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training data needs a target column")]
    NoTarget,
    #[error("training data needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("training data has no feature columns")]
    NoFeatures,
    #[error("target does not fit objective {objective}: {reason}")]
    Target {
        objective: Objective,
        reason: String,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("metric {metric} does not apply to objective {objective}")]
    MetricMismatch {
        metric: Metric,
        objective: Objective,
    },
    #[error("dataset does not provide model feature `{0}`")]
    MissingFeature(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    pub objective: Objective,
    /// Recorded for reproducibility; training itself draws no random numbers.
    pub seed: u64,
    pub lambda_l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            objective: Objective::Regression,
            seed: 0,
            lambda_l2: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.n_rounds < 1 {
            return bad("n_rounds must be at least 1");
        }
        if !(1..=12).contains(&self.max_depth) {
            return bad("max_depth must be in [1, 12]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be nonnegative");
        }
        if !(self.lambda_l2 >= 0.0) {
            return bad("lambda_l2 must be nonnegative");
        }
        Ok(())
    }
}

/// Evaluation metric for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    F1,
    Logloss,
    Rmse,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
            Metric::Logloss => "logloss",
            Metric::Rmse => "rmse",
        }
    }

    /// Default metric for an objective.
    pub fn default_for(objective: Objective) -> Metric {
        match objective {
            Objective::Regression => Metric::Rmse,
            _ => Metric::Logloss,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "f1" => Ok(Metric::F1),
            "logloss" => Ok(Metric::Logloss),
            "rmse" => Ok(Metric::Rmse),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Trained ensemble plus the training loss before any tree (index 0) and
/// after each boosting round.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub ensemble: TreeEnsemble,
    pub loss_history: Vec<f64>,
}

pub fn train_gbdt(train: &Dataset, config: &TrainConfig) -> Result<TreeEnsemble, TrainError> {
    train_gbdt_with_history(train, config).map(|o| o.ensemble)
}

pub fn train_gbdt_with_history(
    train: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    let y = train.target().map_err(|_| TrainError::NoTarget)?;
    let n = train.n_rows();
    if n < 2 {
        return Err(TrainError::TooFewRows(n));
    }
    if train.n_features() == 0 {
        return Err(TrainError::NoFeatures);
    }
    let labels = encode_target(y, config.objective)?;
    let k = labels.n_classes;

    let columns = train.columns();
    let presorted = Presorted::new(columns);
    let rows = train.row_major(train.feature_names()).expect("own columns");
    let p = train.n_features();

    let base_score = labels.base_score(y);
    let mut margin: Vec<f64> = (0..n).flat_map(|_| base_score.iter().copied()).collect();
    let mut loss_history = vec![labels.loss(y, &margin)];
    let mut trees = Vec::with_capacity(config.n_rounds * k);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut prob = vec![0.0; n * k];

    for _ in 0..config.n_rounds {
        labels.probabilities(&margin, &mut prob);
        let mut round = Vec::with_capacity(k);
        for class in 0..k {
            labels.gradients(y, &margin, &prob, class, &mut grad, &mut hess);
            let tree = build_tree(columns, &presorted, &grad, &hess, config, class);
            round.push(tree);
        }
        for tree in round {
            for i in 0..n {
                margin[i * k + tree.class_index] += tree.leaf_value(&rows[i * p..(i + 1) * p]);
            }
            trees.push(tree);
        }
        loss_history.push(labels.loss(y, &margin));
    }

    let ensemble = TreeEnsemble::new(
        train.feature_names().to_vec(),
        config.objective,
        base_score,
        trees,
    )?;
    Ok(TrainOutput {
        ensemble,
        loss_history,
    })
}

/// Target prepared for one objective.
struct Labels {
    objective: Objective,
    n_classes: usize,
    /// Class index per row (classification only).
    class: Vec<usize>,
}

fn encode_target(y: &[f64], objective: Objective) -> Result<Labels, TrainError> {
    let err = |reason: String| TrainError::Target { objective, reason };
    match objective {
        Objective::Regression => {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite("target").into());
            }
            Ok(Labels {
                objective,
                n_classes: 1,
                class: Vec::new(),
            })
        }
        Objective::BinaryLogistic => {
            if infer_task(y)? != TaskKind::Binary {
                return Err(err("expected exactly two distinct values".into()));
            }
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(err("binary labels must be 0 or 1".into()));
            }
            Ok(Labels {
                objective,
                n_classes: 1,
                class: y.iter().map(|&v| v as usize).collect(),
            })
        }
        Objective::MulticlassSoftmax => {
            let distinct = distinct_values(y);
            if distinct.len() < 2 {
                return Err(StatsError::DegenerateTarget.into());
            }
            if distinct
                .iter()
                .any(|&v| v < 0.0 || v.fract() != 0.0 || v > 255.0)
            {
                return Err(err("class labels must be integers 0..K-1".into()));
            }
            let k = *distinct.last().unwrap() as usize + 1;
            Ok(Labels {
                objective,
                n_classes: k,
                class: y.iter().map(|&v| v as usize).collect(),
            })
        }
    }
}

impl Labels {
    fn base_score(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len() as f64;
        match self.objective {
            Objective::Regression => vec![y.iter().sum::<f64>() / n],
            Objective::BinaryLogistic => {
                let rate = (y.iter().sum::<f64>() / n).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                vec![(rate / (1.0 - rate)).ln()]
            }
            Objective::MulticlassSoftmax => {
                let mut counts = vec![0.0; self.n_classes];
                for &c in &self.class {
                    counts[c] += 1.0;
                }
                counts.iter().map(|c| (c / n).max(PROB_CLIP).ln()).collect()
            }
        }
    }

    fn probabilities(&self, margin: &[f64], prob: &mut [f64]) {
        match self.objective {
            Objective::Regression => {}
            Objective::BinaryLogistic => {
                for (p, &m) in prob.iter_mut().zip(margin) {
                    *p = sigmoid(m);
                }
            }
            Objective::MulticlassSoftmax => {
                let k = self.n_classes;
                for (p, m) in prob.chunks_mut(k).zip(margin.chunks(k)) {
                    softmax(m, p);
                }
            }
        }
    }

    fn gradients(
        &self,
        y: &[f64],
        margin: &[f64],
        prob: &[f64],
        class: usize,
        grad: &mut [f64],
        hess: &mut [f64],
    ) {
        let k = self.n_classes;
        for i in 0..y.len() {
            let (g, h) = match self.objective {
                Objective::Regression => (margin[i] - y[i], 1.0),
                Objective::BinaryLogistic => {
                    let p = prob[i];
                    (p - y[i], p * (1.0 - p))
                }
                Objective::MulticlassSoftmax => {
                    let p = prob[i * k + class];
                    let target = if self.class[i] == class { 1.0 } else { 0.0 };
                    (p - target, p * (1.0 - p))
                }
            };
            grad[i] = g;
            hess[i] = h.max(MIN_HESSIAN);
        }
    }

    fn loss(&self, y: &[f64], margin: &[f64]) -> f64 {
        let n = y.len() as f64;
        match self.objective {
            Objective::Regression => (y
                .iter()
                .zip(margin)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / n)
                .sqrt(),
            Objective::BinaryLogistic => {
                let p: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
                binary_logloss(y, &p)
            }
            Objective::MulticlassSoftmax => {
                let k = self.n_classes;
                let mut p = vec![0.0; k];
                let mut total = 0.0;
                for (i, m) in margin.chunks(k).enumerate() {
                    softmax(m, &mut p);
                    total -= p[self.class[i]].clamp(PROB_CLIP, 1.0).ln();
                }
                total / n
            }
        }
    }
}

pub(crate) fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

fn softmax(m: &[f64], out: &mut [f64]) {
    let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(m) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row indices per feature sorted by value, missing values set aside.
struct Presorted {
    order: Vec<Vec<usize>>,
    missing: Vec<Vec<usize>>,
}

impl Presorted {
    fn new(columns: &[Vec<f64>]) -> Self {
        let mut order = Vec::with_capacity(columns.len());
        let mut missing = Vec::with_capacity(columns.len());
        for col in columns {
            let (mut present, absent): (Vec<usize>, Vec<usize>) =
                (0..col.len()).partition(|&i| !col[i].is_nan());
            present.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            order.push(present);
            missing.push(absent);
        }
        Presorted { order, missing }
    }
}

#[derive(Debug, Clone)]
struct GrowNode {
    grad: f64,
    hess: f64,
    /// Some row in the node has a nonzero gradient. Zero-gain splits are
    /// accepted only for such nodes (a balanced XOR needs them at the root).
    active: bool,
    split: Option<(usize, f64, Branch, usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    missing: Branch,
}

const NONE: usize = usize::MAX;

#[inline]
fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn build_tree(
    columns: &[Vec<f64>],
    presorted: &Presorted,
    grad: &[f64],
    hess: &[f64],
    config: &TrainConfig,
    class: usize,
) -> Tree {
    let n = grad.len();
    let lambda = config.lambda_l2;
    let mcw = config.min_child_weight;
    let mut nodes = vec![GrowNode {
        grad: grad.iter().sum(),
        hess: hess.iter().sum(),
        active: grad.iter().any(|&g| g != 0.0),
        split: None,
    }];
    // Node each row currently sits in; NONE once its node is closed.
    let mut node_of = vec![0usize; n];
    let mut open: Vec<usize> = vec![0];

    for _depth in 0..config.max_depth {
        if open.is_empty() {
            break;
        }
        let n_nodes = nodes.len();
        let mut is_open = vec![false; n_nodes];
        for &j in &open {
            is_open[j] = true;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; n_nodes];

        let mut gl = vec![0.0; n_nodes];
        let mut hl = vec![0.0; n_nodes];
        let mut gm = vec![0.0; n_nodes];
        let mut hm = vec![0.0; n_nodes];
        let mut last = vec![f64::NAN; n_nodes];

        for (f, col) in columns.iter().enumerate() {
            gl.fill(0.0);
            hl.fill(0.0);
            gm.fill(0.0);
            hm.fill(0.0);
            last.fill(f64::NAN);
            for &i in &presorted.missing[f] {
                let j = node_of[i];
                if j != NONE && is_open[j] {
                    gm[j] += grad[i];
                    hm[j] += hess[i];
                }
            }
            for &i in &presorted.order[f] {
                let j = node_of[i];
                if j == NONE || !is_open[j] {
                    continue;
                }
                let v = col[i];
                let prev = last[j];
                if !prev.is_nan() && v > prev {
                    let node = &nodes[j];
                    if !node.active {
                        last[j] = v;
                        continue;
                    }
                    let parent = score(node.grad, node.hess, lambda);
                    let mut threshold = prev + (v - prev) / 2.0;
                    if !(prev < threshold && threshold <= v) {
                        threshold = v;
                    }
                    for missing in [Branch::Left, Branch::Right] {
                        let (g_left, h_left) = match missing {
                            Branch::Left => (gl[j] + gm[j], hl[j] + hm[j]),
                            Branch::Right => (gl[j], hl[j]),
                        };
                        let g_right = node.grad - g_left;
                        let h_right = node.hess - h_left;
                        if h_left < mcw || h_right < mcw {
                            continue;
                        }
                        let gain = score(g_left, h_left, lambda) + score(g_right, h_right, lambda)
                            - parent;
                        if gain >= 0.0 && best[j].is_none_or(|b| gain > b.gain) {
                            best[j] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold,
                                missing,
                            });
                        }
                    }
                }
                gl[j] += grad[i];
                hl[j] += hess[i];
                last[j] = v;
            }
        }

        let mut next_open = Vec::new();
        for &j in &open {
            if let Some(c) = best[j] {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(GrowNode {
                    grad: 0.0,
                    hess: 0.0,
                    active: false,
                    split: None,
                });
                nodes.push(GrowNode {
                    grad: 0.0,
                    hess: 0.0,
                    active: false,
                    split: None,
                });
                nodes[j].split = Some((c.feature, c.threshold, c.missing, left, right));
                next_open.push(left);
                next_open.push(right);
            }
        }
        for i in 0..n {
            let j = node_of[i];
            if j == NONE {
                continue;
            }
            match nodes[j].split {
                Some((f, t, missing, left, right)) => {
                    let v = columns[f][i];
                    let child = if v.is_nan() {
                        if missing == Branch::Left {
                            left
                        } else {
                            right
                        }
                    } else if v < t {
                        left
                    } else {
                        right
                    };
                    node_of[i] = child;
                    nodes[child].grad += grad[i];
                    nodes[child].hess += hess[i];
                    nodes[child].active |= grad[i] != 0.0;
                }
                None => node_of[i] = NONE,
            }
        }
        open = next_open;
    }

    // Leaf covers are hessian sums; internal covers are the sum of their
    // children so additivity holds exactly.
    let mut out: Vec<TreeNode> = Vec::with_capacity(nodes.len());
    for node in &nodes {
        out.push(match node.split {
            Some((f, t, missing, left, right)) => TreeNode::split(f, t, left, right, missing, 0.0),
            None => TreeNode::leaf(
                -node.grad / (node.hess + lambda) * config.learning_rate,
                node.hess,
            ),
        });
    }
    for j in (0..out.len()).rev() {
        if let NodeKind::Split { left, right, .. } = out[j].kind {
            out[j].cover = out[left].cover + out[right].cover;
        }
    }
    Tree::from_nodes(class, out)
}

/// Positive-class F1 from confusion counts; 0 when undefined.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Mean binary log loss with probabilities clipped to `[1e-12, 1 - 1e-12]`.
pub fn binary_logloss(y: &[f64], p: &[f64]) -> f64 {
    y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let pi = pi.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
            -(yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln())
        })
        .sum::<f64>()
        / y.len() as f64
}

pub fn rmse(y: &[f64], pred: &[f64]) -> f64 {
    (y.iter()
        .zip(pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.len() as f64)
        .sqrt()
}

/// Scores `ensemble` on the labelled `data` (columns matched by name).
pub fn evaluate(
    ensemble: &TreeEnsemble,
    data: &Dataset,
    metric: Metric,
) -> Result<f64, TrainError> {
    let objective = ensemble.objective();
    let mismatch = Err(TrainError::MetricMismatch { metric, objective });
    match (metric, objective) {
        (Metric::Rmse, Objective::Regression) => {}
        (Metric::Rmse, _) | (_, Objective::Regression) => return mismatch,
        (Metric::F1, Objective::MulticlassSoftmax) => return mismatch,
        _ => {}
    }
    let y = data.target().map_err(|_| TrainError::NoTarget)?;
    let names = ensemble.feature_names();
    let rows = data
        .row_major(names)
        .map_err(|e| TrainError::MissingFeature(e.to_string()))?;
    let p = names.len();
    let k = ensemble.n_classes();
    let n = data.n_rows();
    let mut margin = Vec::with_capacity(n * k);
    for i in 0..n {
        margin.extend(ensemble.predict_margin(&rows[i * p..(i + 1) * p])?);
    }

    Ok(match objective {
        Objective::Regression => rmse(y, &margin),
        Objective::BinaryLogistic => {
            let prob: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
            match metric {
                Metric::Logloss => binary_logloss(y, &prob),
                Metric::Accuracy => {
                    let correct = y
                        .iter()
                        .zip(&prob)
                        .filter(|(&yi, &pi)| (pi >= 0.5) == (yi == 1.0))
                        .count();
                    correct as f64 / n as f64
                }
                Metric::F1 => {
                    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
                    for (&yi, &pi) in y.iter().zip(&prob) {
                        match (pi >= 0.5, yi == 1.0) {
                            (true, true) => tp += 1,
                            (true, false) => fp += 1,
                            (false, true) => fn_ += 1,
                            (false, false) => {}
                        }
                    }
                    f1_from_counts(tp, fp, fn_)
                }
                Metric::Rmse => unreachable!(),
            }
        }
        Objective::MulticlassSoftmax => {
            let mut prob = vec![0.0; k];
            let mut correct = 0usize;
            let mut loss = 0.0;
            for (i, m) in margin.chunks(k).enumerate() {
                softmax(m, &mut prob);
                let label = y[i] as usize;
                let argmax = (0..k)
                    .max_by(|&a, &b| prob[a].total_cmp(&prob[b]).then(b.cmp(&a)))
                    .unwrap();
                if argmax == label {
                    correct += 1;
                }
                loss -= prob
                    .get(label)
                    .copied()
                    .unwrap_or(0.0)
                    .clamp(PROB_CLIP, 1.0)
                    .ln();
            }
            match metric {
                Metric::Accuracy => correct as f64 / n as f64,
                _ => loss / n as f64,
            }
        }
    })
}
