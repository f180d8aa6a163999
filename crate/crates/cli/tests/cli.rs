use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use shapsel_core::{validate_report_json, validate_shap_csv, validate_sweep_csv};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shapsel"));
    cmd.env_remove("SHAPSEL_THREADS");
    cmd
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn select_toy(out: &Path, extra: &[&str]) -> Output {
    let model = data("toy_model.json");
    let csv = data("toy.csv");
    let mut args = vec![
        "select",
        "--model",
        model.to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--target",
        "y",
        "--output",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn golden_toy_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = select_toy(&out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = std::fs::read_to_string(&out).unwrap();
    let want = std::fs::read_to_string(data("toy_report.golden.json")).unwrap();
    assert_eq!(got, want);
    validate_report_json(&got).unwrap();
    let table = String::from_utf8(o.stdout).unwrap();
    let order: Vec<&str> = table
        .lines()
        .skip(1)
        .take(4)
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(
        order,
        ["age", "score", "income", "zip"],
        "most significant first"
    );
}

#[test]
fn report_to_stdout_moves_table_to_stderr() {
    let o = select_toy(Path::new("-"), &[]);
    assert!(o.status.success());
    validate_report_json(&String::from_utf8(o.stdout.clone()).unwrap()).unwrap();
    assert!(stderr(&o).contains("selected at threshold"));
}

#[test]
fn missing_target_column_is_usage_error() {
    let model = data("toy_model.json");
    let csv = data("toy.csv");
    let o = run(&[
        "select",
        "--model",
        model.to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--target",
        "salary",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("salary"), "{}", stderr(&o));
}

#[test]
fn threshold_bounds_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    for bad in ["0", "-0.1", "1.5", "abc"] {
        let o = select_toy(&out, &["--threshold", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    let o = select_toy(&out, &["--threshold", "0"]);
    assert!(stderr(&o).contains("threshold must be in (0,1]"));
    assert!(select_toy(&out, &["--threshold", "1"]).status.success());
}

#[test]
fn io_and_parse_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let missing = dir.path().join("nope.json");
    let csv = data("toy.csv");
    let o = run(&[
        "select",
        "--model",
        missing.to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--target",
        "y",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"feature_names\": [").unwrap();
    let o = run(&[
        "select",
        "--model",
        broken.to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--target",
        "y",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "age,income,score,zip,y\n1,2,x,4,5\n").unwrap();
    let model = data("toy_model.json");
    let o = run(&[
        "select",
        "--model",
        model.to_str().unwrap(),
        "--data",
        bad_csv.to_str().unwrap(),
        "--target",
        "y",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("score"), "{}", stderr(&o));
}

#[test]
fn statistical_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("toy_model.json");
    let few = dir.path().join("few.csv");
    std::fs::write(
        &few,
        "age,income,score,zip,y\n30,1,0.2,100,1\n50,4,0.9,700,2\n45,6,0.1,300,3\n",
    )
    .unwrap();
    let o = run(&[
        "select",
        "--model",
        model.to_str().unwrap(),
        "--data",
        few.to_str().unwrap(),
        "--target",
        "y",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("too few rows"));
    let constant = dir.path().join("constant.csv");
    let body: String = (0..20)
        .map(|i| format!("{},{},0.{},{}00,7\n", 20 + i, i % 9, i % 10, i % 9 + 1))
        .collect();
    std::fs::write(&constant, format!("age,income,score,zip,y\n{body}")).unwrap();
    let o = run(&[
        "select",
        "--model",
        model.to_str().unwrap(),
        "--data",
        constant.to_str().unwrap(),
        "--target",
        "y",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("degenerate target"));
}

#[test]
fn shap_csv_is_locally_accurate() {
    let model = data("toy_model.json");
    let csv = data("toy.csv");
    let o = run(&[
        "shap",
        "--model",
        model.to_str().unwrap(),
        "--data",
        csv.to_str().unwrap(),
        "--target",
        "y",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(validate_shap_csv(&text).unwrap(), 50);
    assert!(text.starts_with("row_index,class,age,income,score,zip,base_value,margin_prediction\n"));
}

#[test]
fn train_then_select_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &str| d.join(p).to_str().unwrap().to_string();
    let o = run(&[
        "synth",
        "--task",
        "multiclass",
        "--n-train",
        "600",
        "--n-validation",
        "300",
        "--n-test",
        "100",
        "--n-noise",
        "3",
        "--out-dir",
        &s(""),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "train",
        "--data",
        &s("train.csv"),
        "--target",
        "y",
        "--rounds",
        "20",
        "--output",
        &s("model.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "select",
        "--model",
        &s("model.json"),
        "--data",
        &s("validation.csv"),
        "--target",
        "y",
        "--output",
        &s("report.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc =
        validate_report_json(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(doc["task"], "multiclass");
    assert_eq!(doc["config"]["n_classes"], 3);
    assert!(doc["records"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["class_of_max_t"].is_u64()));
}

#[test]
fn train_split_writes_three_parts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &str| d.join(p).to_str().unwrap().to_string();
    assert!(run(&[
        "synth",
        "--n-train",
        "100",
        "--n-validation",
        "0",
        "--n-test",
        "0",
        "--n-noise",
        "1",
        "--out-dir",
        &s("")
    ])
    .status
    .success());
    let o = run(&[
        "train",
        "--data",
        &s("train.csv"),
        "--target",
        "y",
        "--split",
        "0.6/0.2/0.2",
        "--split-dir",
        &s("parts"),
        "--rounds",
        "5",
        "--output",
        &s("m.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = |f: &str| {
        std::fs::read_to_string(d.join("parts").join(f))
            .unwrap()
            .lines()
            .count()
            - 1
    };
    assert_eq!(
        (
            lines("train.csv"),
            lines("validation.csv"),
            lines("test.csv")
        ),
        (60, 20, 20)
    );
    let o = run(&[
        "train",
        "--data",
        &s("train.csv"),
        "--target",
        "y",
        "--split",
        "0.6/0.6/0.2",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_counts_are_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = |p: &str| d.join(p).to_str().unwrap().to_string();
    assert!(run(&[
        "synth",
        "--task",
        "binary",
        "--n-train",
        "800",
        "--n-validation",
        "400",
        "--n-test",
        "0",
        "--n-noise",
        "6",
        "--out-dir",
        &s("")
    ])
    .status
    .success());
    assert!(run(&[
        "train",
        "--data",
        &s("train.csv"),
        "--target",
        "y",
        "--rounds",
        "30",
        "--output",
        &s("m.json")
    ])
    .status
    .success());
    let o = run(&[
        "sweep",
        "--model",
        &s("m.json"),
        "--data",
        &s("validation.csv"),
        "--target",
        "y",
        "--thresholds",
        "0.001,0.01,0.05,0.1,0.5",
        "--metric",
        "logloss",
        "--train",
        &s("train.csv"),
        "--rounds",
        "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = validate_sweep_csv(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(lines.len(), 5);
    assert!(lines.windows(2).all(|w| w[0].n_selected <= w[1].n_selected));
    assert!(lines.iter().all(|l| l.metric.is_some()));
    let o = run(&[
        "sweep",
        "--model",
        &s("m.json"),
        "--data",
        &s("validation.csv"),
        "--target",
        "y",
        "--metric",
        "logloss",
    ]);
    assert_eq!(o.status.code(), Some(2), "metric without training data");
    let o = run(&[
        "sweep",
        "--model",
        &s("m.json"),
        "--data",
        &s("validation.csv"),
        "--target",
        "y",
        "--metric",
        "rmse",
        "--train",
        &s("train.csv"),
    ]);
    assert_eq!(o.status.code(), Some(2), "metric does not fit a classifier");
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(select_toy(&a, &["--seed", "5"]).status.success());
    let o = bin()
        .env("SHAPSEL_THREADS", "1")
        .args([
            "select",
            "--model",
            data("toy_model.json").to_str().unwrap(),
            "--data",
            data("toy.csv").to_str().unwrap(),
            "--target",
            "y",
            "--seed",
            "5",
            "--output",
            b.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let o = bin()
        .env("SHAPSEL_THREADS", "zero")
        .args(["select", "--help"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "help never touches the pool");
    let o = bin()
        .env("SHAPSEL_THREADS", "zero")
        .args([
            "shap",
            "--model",
            data("toy_model.json").to_str().unwrap(),
            "--data",
            data("toy.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
