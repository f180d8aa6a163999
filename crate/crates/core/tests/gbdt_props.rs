use shapsel_core::gbdt::train_gbdt_with_history;
use shapsel_core::synth::{synth_splits, SynthConfig, SynthTask};
use shapsel_core::treeshap::tree_shap_matrix;
use shapsel_core::*;

fn small(task: SynthTask) -> (Dataset, TrainConfig) {
    let splits = synth_splits(&SynthConfig {
        task,
        n_train: 600,
        n_validation: 0,
        n_test: 0,
        n_noise: 3,
        seed: 17,
        ..SynthConfig::default()
    });
    let cfg = TrainConfig {
        objective: task.objective(),
        n_rounds: 25,
        ..TrainConfig::default()
    };
    (splits.train, cfg)
}

#[test]
fn training_loss_never_increases() {
    for task in [
        SynthTask::Regression,
        SynthTask::Binary,
        SynthTask::Multiclass,
    ] {
        let (train, cfg) = small(task);
        let out = train_gbdt_with_history(&train, &cfg).unwrap();
        assert_eq!(out.loss_history.len(), cfg.n_rounds + 1);
        for (round, w) in out.loss_history.windows(2).enumerate() {
            assert!(
                w[1] <= w[0],
                "{task:?} round {}: {} -> {}",
                round + 1,
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    for task in [
        SynthTask::Regression,
        SynthTask::Binary,
        SynthTask::Multiclass,
    ] {
        let (train, cfg) = small(task);
        let a = train_gbdt(&train, &cfg).unwrap();
        let b = train_gbdt(&train, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}

#[test]
fn trained_models_round_trip_and_are_locally_accurate() {
    for task in [
        SynthTask::Regression,
        SynthTask::Binary,
        SynthTask::Multiclass,
    ] {
        let (train, cfg) = small(task);
        let model = train_gbdt(&train, &cfg).unwrap();
        let back = parse_model(model.to_json().as_bytes()).unwrap();
        let rows = train.row_major(model.feature_names()).unwrap();
        let p = model.n_features();
        for row in rows.chunks(p).take(100) {
            assert_eq!(
                model.predict_margin(row).unwrap(),
                back.predict_margin(row).unwrap()
            );
        }
        let shap = tree_shap_matrix(&model, &rows);
        for (r, row) in rows.chunks(p).enumerate() {
            let margin = model.predict_margin(row).unwrap();
            for (k, m) in margin.iter().enumerate() {
                let total: f64 =
                    (0..p).map(|f| shap.get(r, f, k)).sum::<f64>() + shap.base_values()[k];
                assert!((total - m).abs() <= 1e-9 * m.abs().max(1.0));
            }
        }
    }
}

#[test]
fn all_correct_predictions_score_perfectly() {
    let (train, cfg) = small(SynthTask::Binary);
    let cfg = TrainConfig {
        n_rounds: 200,
        max_depth: 6,
        learning_rate: 1.0,
        min_child_weight: 0.0,
        lambda_l2: 0.0,
        ..cfg
    };
    let model = train_gbdt(&train, &cfg).unwrap();
    assert_eq!(evaluate(&model, &train, Metric::Accuracy).unwrap(), 1.0);
    assert!(evaluate(&model, &train, Metric::Logloss).unwrap() < 1e-6);
    assert!(evaluate(&model, &train, Metric::Rmse).is_err());
}
