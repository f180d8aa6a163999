//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapsel_core::synth::{
    random_ensemble, random_rows, synth_splits, RandomEnsembleConfig, SynthConfig, SynthTask,
};
use shapsel_core::{train_gbdt, Dataset, TrainConfig, TreeEnsemble};

/// Random ensemble plus `n_rows` row-major rows.
pub fn random_model(
    n_features: usize,
    max_trees: usize,
    max_depth: usize,
    n_rows: usize,
) -> (TreeEnsemble, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe7c);
    let config = RandomEnsembleConfig {
        n_features,
        max_trees,
        max_depth,
        n_classes: 1,
        leaf_probability: 0.0,
    };
    let ensemble = random_ensemble(&config, &mut rng);
    let rows = random_rows(n_rows, n_features, 0.05, &mut rng);
    (ensemble, rows)
}

/// Gaussian design matrix with a linear target.
pub fn regression_problem(n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let y = (0..n)
        .map(|i| {
            (0..p).map(|j| x[(i, j)] * (j % 3) as f64).sum::<f64>() + rng.random_range(-0.5..0.5)
        })
        .collect();
    (x, y)
}

/// Trained model and validation set of the synthetic benchmark.
pub fn synthetic_model(
    task: SynthTask,
    n_train: usize,
    n_validation: usize,
) -> (TreeEnsemble, Dataset) {
    let splits = synth_splits(&SynthConfig {
        task,
        n_train,
        n_validation,
        n_test: 0,
        ..SynthConfig::default()
    });
    let config = TrainConfig {
        objective: task.objective(),
        ..TrainConfig::default()
    };
    (
        train_gbdt(&splits.train, &config).expect("synthetic data trains"),
        splits.validation,
    )
}
