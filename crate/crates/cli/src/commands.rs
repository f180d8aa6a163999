use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapsel_core::report::{write_shap_csv, write_sweep_csv};
use shapsel_core::stats::TaskKind;
use shapsel_core::synth::{synth_splits, SynthConfig, SynthTask};
use shapsel_core::{
    evaluate, infer_task, parse_model, shap_select, threshold_sweep, train_gbdt,
    validate_report_json, validate_shap_csv, validate_sweep_csv, Dataset, Objective, SelectOptions,
    SelectionReport, TrainConfig, TreeEnsemble,
};

use crate::error::CliError;
use crate::{
    BoostFlags, SelectArgs, SelectionFlags, ShapArgs, SweepArgs, SynthArgs, SynthKind, TaskArg,
    TrainArgs,
};

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if is_stdout(path) {
        let mut out = std::io::stdout().lock();
        match out.write_all(bytes).and_then(|()| out.flush()) {
            // A closed pipe (`| head`) is the reader's choice, not a failure.
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            other => Ok(other?),
        }
    } else {
        fs::write(path, bytes).map_err(|e| CliError::from(e).context(path.display()))
    }
}

fn load_model(path: &Path) -> Result<TreeEnsemble, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::from(e).context(path.display()))?;
    parse_model(&bytes).map_err(|e| CliError::from(e).context(path.display()))
}

fn load_data(path: &Path, target: Option<&str>) -> Result<Dataset, CliError> {
    Dataset::from_csv_path(path, target).map_err(|e| CliError::from(e).context(path.display()))
}

fn requested_task(arg: TaskArg, ensemble: &TreeEnsemble) -> Option<TaskKind> {
    match arg {
        TaskArg::Auto => None,
        TaskArg::Regression => Some(TaskKind::Regression),
        TaskArg::Binary => Some(TaskKind::Binary),
        TaskArg::Multiclass => Some(TaskKind::Multiclass {
            n_classes: ensemble.n_classes(),
        }),
    }
}

fn select_options(
    flags: &SelectionFlags,
    threshold: f64,
    ensemble: &TreeEnsemble,
) -> SelectOptions {
    SelectOptions {
        threshold,
        task: requested_task(flags.task, ensemble),
        l1_weight: flags.l1_weight,
        seed: flags.seed,
    }
}

/// Most significant first.
fn render_table(report: &SelectionReport) -> String {
    let width = report
        .records
        .iter()
        .map(|r| r.feature.chars().count())
        .max()
        .unwrap_or(0)
        .max("feature".len());
    let mut out = format!(
        "{:<width$}  {:>12}  {:>12}  {:>4}  selected\n",
        "feature", "t_value", "p_adjusted", "sign"
    );
    let mut records: Vec<_> = report.records.iter().collect();
    records.sort_by_key(|r| std::cmp::Reverse(r.removal_rank));
    for r in records {
        let selected = report.selected.contains(&r.feature);
        out.push_str(&format!(
            "{:<width$}  {:>12.4}  {:>12.4e}  {:>4}  {}\n",
            r.feature,
            r.t_value,
            r.p_adjusted,
            r.coefficient_sign,
            if selected { "yes" } else { "no" }
        ));
    }
    out.push_str(&format!(
        "{} of {} features selected at threshold {} ({} task)\n",
        report.selected.len(),
        report.records.len(),
        report.threshold,
        report.task
    ));
    out
}

pub fn select(args: &SelectArgs) -> Result<(), CliError> {
    let ensemble = load_model(&args.flags.model)?;
    let data = load_data(&args.flags.data, Some(&args.flags.target))?;
    let options = select_options(&args.flags, args.threshold, &ensemble);
    let report = shap_select(&ensemble, &data, &options)?;
    let json = report.to_json();
    validate_report_json(&json)?;
    write_output(&args.output, json.as_bytes())?;
    let table = render_table(&report);
    if is_stdout(&args.output) {
        eprint!("{table}");
    } else {
        print!("{table}");
    }
    Ok(())
}

pub fn shap(args: &ShapArgs) -> Result<(), CliError> {
    let ensemble = load_model(&args.model)?;
    let data = load_data(&args.data, args.target.as_deref())?;
    let shap = shapsel_core::tree_shap(&ensemble, &data)?;
    let rows = data.row_major(ensemble.feature_names())?;
    let mut buf = Vec::new();
    write_shap_csv(&shap, &ensemble, &rows, &mut buf)?;
    validate_shap_csv(std::str::from_utf8(&buf).expect("CSV writer emits UTF-8"))?;
    write_output(&args.output, &buf)
}

fn train_config(boost: &BoostFlags, objective: Objective, seed: u64) -> TrainConfig {
    TrainConfig {
        n_rounds: boost.rounds,
        max_depth: boost.max_depth,
        learning_rate: boost.learning_rate,
        min_child_weight: boost.min_child_weight,
        objective,
        seed,
        lambda_l2: boost.lambda,
    }
}

fn objective_for(arg: TaskArg, target: &[f64]) -> Result<Objective, CliError> {
    let kind = match arg {
        TaskArg::Regression => return Ok(Objective::Regression),
        TaskArg::Binary => return Ok(Objective::BinaryLogistic),
        TaskArg::Multiclass => return Ok(Objective::MulticlassSoftmax),
        TaskArg::Auto => infer_task(target).map_err(|e| CliError::stat(e.to_string()))?,
    };
    Ok(match kind {
        TaskKind::Regression => Objective::Regression,
        TaskKind::Binary => Objective::BinaryLogistic,
        TaskKind::Multiclass { .. } => Objective::MulticlassSoftmax,
    })
}

fn write_csv_file(data: &Dataset, path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::from(e).context(path.display()))?;
    data.write_csv(std::io::BufWriter::new(file))
        .map_err(|e| CliError::from(e).context(path.display()))
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let data = load_data(&args.data, Some(&args.target))?;
    let train = match args.split {
        None => data,
        Some([train_frac, validation_frac, _]) => {
            let n = data.n_rows();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(args.seed));
            let n_train = (train_frac * n as f64).round() as usize;
            let n_validation = ((validation_frac * n as f64).round() as usize).min(n - n_train);
            let dir = match (&args.split_dir, is_stdout(&args.output)) {
                (Some(dir), _) => dir.clone(),
                (None, false) => args
                    .output
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from(".")),
                (None, true) => PathBuf::from("."),
            };
            fs::create_dir_all(&dir).map_err(|e| CliError::from(e).context(dir.display()))?;
            let (train_rows, rest) = order.split_at(n_train);
            let (validation_rows, test_rows) = rest.split_at(n_validation);
            let train = data.select_rows(train_rows);
            write_csv_file(&train, &dir.join("train.csv"))?;
            write_csv_file(
                &data.select_rows(validation_rows),
                &dir.join("validation.csv"),
            )?;
            write_csv_file(&data.select_rows(test_rows), &dir.join("test.csv"))?;
            train
        }
    };
    let objective = objective_for(args.task, train.target()?)?;
    let ensemble = train_gbdt(&train, &train_config(&args.boost, objective, args.seed))?;
    let mut json = ensemble.to_json();
    json.push('\n');
    write_output(&args.output, json.as_bytes())
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let ensemble = load_model(&args.flags.model)?;
    let validation = load_data(&args.flags.data, Some(&args.flags.target))?;
    let training = match (&args.metric, &args.train) {
        (Some(_), Some(path)) => Some(load_data(path, Some(&args.flags.target))?),
        (Some(_), None) => return Err(CliError::usage("--metric needs --train to retrain on")),
        (None, _) => None,
    };
    let first = args.thresholds.0[0];
    let options = select_options(&args.flags, first, &ensemble);
    let mut sweep = threshold_sweep(&ensemble, &validation, &options, &args.thresholds.0)?;
    if let (Some(metric), Some(training)) = (args.metric, training) {
        let config = train_config(&args.boost, ensemble.objective(), args.flags.seed);
        let mut cache: HashMap<Vec<String>, f64> = HashMap::new();
        sweep.score_with(|selected| -> Result<f64, CliError> {
            if selected.is_empty() {
                return Ok(f64::NAN);
            }
            let mut key = selected.to_vec();
            key.sort();
            if let Some(&v) = cache.get(&key) {
                return Ok(v);
            }
            let model = train_gbdt(&training.select_features(&key)?, &config)?;
            let value = evaluate(&model, &validation, metric)?;
            cache.insert(key, value);
            Ok(value)
        })?;
    }
    let mut buf = Vec::new();
    write_sweep_csv(&sweep, &mut buf)?;
    validate_sweep_csv(std::str::from_utf8(&buf).expect("CSV writer emits UTF-8"))?;
    write_output(&args.output, &buf)
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let task = match args.task {
        SynthKind::Regression => SynthTask::Regression,
        SynthKind::Binary => SynthTask::Binary,
        SynthKind::Multiclass => SynthTask::Multiclass,
    };
    let splits = synth_splits(&SynthConfig {
        task,
        n_train: args.n_train,
        n_validation: args.n_validation,
        n_test: args.n_test,
        n_noise: args.n_noise,
        seed: args.seed,
        ..SynthConfig::default()
    });
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::from(e).context(args.out_dir.display()))?;
    write_csv_file(&splits.train, &args.out_dir.join("train.csv"))?;
    write_csv_file(&splits.validation, &args.out_dir.join("validation.csv"))?;
    write_csv_file(&splits.test, &args.out_dir.join("test.csv"))
}
