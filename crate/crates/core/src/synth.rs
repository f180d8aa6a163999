//! Seeded generators: the synthetic selection benchmark and random tree
//! ensembles for testing Shapley computations.
//!
//! The benchmark has five informative features `x1..x5` and `n_noise`
//! independent noise features `noise1..`, all standard normal, with the
//! signal `η = 2·x1 + x2·x3 − x4 + 0.5·x5`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::model::{Branch, Objective, Tree, TreeEnsemble, TreeNode};
use crate::stats::TaskKind;

pub const INFORMATIVE: [&str; 5] = ["x1", "x2", "x3", "x4", "x5"];

/// Target flavour of the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthTask {
    /// `y = η + ε`.
    Regression,
    /// `y = 1[η + ε > 0]`.
    Binary,
    /// `y ∈ {0,1,2}` from cutting `η + ε` at ±1.
    Multiclass,
}

impl SynthTask {
    pub fn task_kind(self) -> TaskKind {
        match self {
            SynthTask::Regression => TaskKind::Regression,
            SynthTask::Binary => TaskKind::Binary,
            SynthTask::Multiclass => TaskKind::Multiclass { n_classes: 3 },
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            SynthTask::Regression => Objective::Regression,
            SynthTask::Binary => Objective::BinaryLogistic,
            SynthTask::Multiclass => Objective::MulticlassSoftmax,
        }
    }
}

impl std::str::FromStr for SynthTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regression" => Ok(SynthTask::Regression),
            "binary" => Ok(SynthTask::Binary),
            "multiclass" => Ok(SynthTask::Multiclass),
            other => Err(format!("unknown synthetic task `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub task: SynthTask,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub n_noise: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            task: SynthTask::Regression,
            n_train: 5000,
            n_validation: 2000,
            n_test: 2000,
            n_noise: 15,
            noise_sd: 0.5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSplits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

pub fn synth_feature_names(n_noise: usize) -> Vec<String> {
    INFORMATIVE
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n_noise).map(|i| format!("noise{i}")))
        .collect()
}

/// One dataset of `n` rows drawn from the benchmark distribution.
pub fn synth_dataset(
    task: SynthTask,
    n: usize,
    n_noise: usize,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Dataset {
    let names = synth_feature_names(n_noise);
    let p = names.len();
    let mut columns = vec![Vec::with_capacity(n); p];
    let mut target = Vec::with_capacity(n);
    let eps = Normal::new(0.0, noise_sd).expect("noise sd is finite and nonnegative");
    for _ in 0..n {
        for col in columns.iter_mut() {
            col.push(StandardNormal.sample(rng));
        }
        let x = |j: usize| *columns[j].last().expect("pushed above");
        let eta = 2.0 * x(0) + x(1) * x(2) - x(3) + 0.5 * x(4);
        let z = eta + eps.sample(rng);
        target.push(match task {
            SynthTask::Regression => z,
            SynthTask::Binary => f64::from(u8::from(z > 0.0)),
            SynthTask::Multiclass => {
                if z < -1.0 {
                    0.0
                } else if z < 1.0 {
                    1.0
                } else {
                    2.0
                }
            }
        });
    }
    Dataset::new(names, columns, Some(("y".to_string(), target)))
        .expect("generated columns are consistent")
}

/// Train, validation and test sets drawn from one seeded stream.
pub fn synth_splits(config: &SynthConfig) -> SynthSplits {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |n| synth_dataset(config.task, n, config.n_noise, config.noise_sd, &mut rng);
    SynthSplits {
        train: draw(config.n_train),
        validation: draw(config.n_validation),
        test: draw(config.n_test),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomEnsembleConfig {
    pub n_features: usize,
    pub max_trees: usize,
    pub max_depth: usize,
    pub n_classes: usize,
    /// Probability that a node above `max_depth` becomes a leaf.
    pub leaf_probability: f64,
}

impl Default for RandomEnsembleConfig {
    fn default() -> Self {
        RandomEnsembleConfig {
            n_features: 8,
            max_trees: 5,
            max_depth: 4,
            n_classes: 1,
            leaf_probability: 0.2,
        }
    }
}

fn grow(
    nodes: &mut Vec<TreeNode>,
    cover: f64,
    depth: usize,
    config: &RandomEnsembleConfig,
    rng: &mut impl Rng,
) -> usize {
    let id = nodes.len();
    if depth == config.max_depth || (depth > 0 && rng.random::<f64>() < config.leaf_probability) {
        nodes.push(TreeNode::leaf(rng.random_range(-2.0..2.0), cover));
        return id;
    }
    let feature = rng.random_range(0..config.n_features);
    let threshold = rng.random_range(-1.5..1.5);
    let missing = if rng.random::<bool>() {
        Branch::Left
    } else {
        Branch::Right
    };
    let left_cover = cover * rng.random_range(0.05..0.95);
    let right_cover = cover - left_cover;
    nodes.push(TreeNode::leaf(0.0, cover));
    let left = grow(nodes, left_cover, depth + 1, config, rng);
    let right = grow(nodes, right_cover, depth + 1, config, rng);
    nodes[id] = TreeNode::split(feature, threshold, left, right, missing, cover);
    id
}

/// Random ensemble with features `f0..`, 1..=`max_trees` trees per class and
/// covers that are additive by construction. Repeated features along a path
/// occur naturally.
pub fn random_ensemble(config: &RandomEnsembleConfig, rng: &mut impl Rng) -> TreeEnsemble {
    let k = config.n_classes.max(1);
    let objective = match k {
        1 if rng.random::<bool>() => Objective::BinaryLogistic,
        1 => Objective::Regression,
        _ => Objective::MulticlassSoftmax,
    };
    let mut trees = Vec::new();
    for class in 0..k {
        for _ in 0..rng.random_range(1..=config.max_trees) {
            let mut nodes = Vec::new();
            let root_cover = rng.random_range(10.0..1000.0);
            grow(&mut nodes, root_cover, 0, config, rng);
            trees.push(Tree::from_nodes(class, nodes));
        }
    }
    let names = (0..config.n_features).map(|i| format!("f{i}")).collect();
    let base = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    TreeEnsemble::new(names, objective, base, trees).expect("generated ensemble is valid")
}

/// Row-major rows of standard normals, a fraction of them missing (NaN).
pub fn random_rows(
    n_rows: usize,
    n_features: usize,
    missing_rate: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    (0..n_rows * n_features)
        .map(|_| {
            if rng.random::<f64>() < missing_rate {
                f64::NAN
            } else {
                StandardNormal.sample(rng)
            }
        })
        .collect()
}
