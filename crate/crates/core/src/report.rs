//! File formats: selection report JSON, Shapley-value CSV and sweep CSV,
//! plus validators used by tests and by the CLI before it exits.
//!
//! Floats are written with 17 significant digits in scientific notation so
//! they round-trip bit for bit. JSON has no infinity, so `±inf` (perfect-fit
//! t-values) is written as `±f64::MAX`.

use std::fmt::Write as _;
use std::io::Write;

use serde_json::Value;
use thiserror::Error;

use crate::model::TreeEnsemble;
use crate::selection::{SelectionReport, ThresholdSweep};
use crate::treeshap::ShapMatrix;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema violation at {path}: {msg}")]
    Violation { path: String, msg: String },
}

fn violation(path: impl Into<String>, msg: impl Into<String>) -> SchemaError {
    SchemaError::Violation {
        path: path.into(),
        msg: msg.into(),
    }
}

/// 17 significant digits; infinities clamp to the largest finite double.
pub fn format_float(v: f64) -> String {
    let v = if v == f64::INFINITY {
        f64::MAX
    } else if v == f64::NEG_INFINITY {
        -f64::MAX
    } else {
        v
    };
    if v.is_nan() {
        return "null".to_string();
    }
    format!("{v:.16e}")
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

impl SelectionReport {
    /// Report JSON with a fixed key order.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        out.push_str("{\n");
        let _ = writeln!(out, "  \"task\": {},", json_str(self.task.name()));
        let _ = writeln!(out, "  \"threshold\": {},", format_float(self.threshold));
        let selected: Vec<String> = self.selected.iter().map(|s| json_str(s)).collect();
        let _ = writeln!(out, "  \"selected\": [{}],", selected.join(", "));
        out.push_str("  \"records\": [");
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(if i == 0 { "\n" } else { ",\n" });
            let class = r
                .class_of_max_t
                .map_or_else(|| "null".to_string(), |c| c.to_string());
            let _ = write!(
                out,
                "    {{\"feature\": {}, \"removal_rank\": {}, \"t_value\": {}, \
                 \"coefficient_sign\": {}, \"p_adjusted\": {}, \"class_of_max_t\": {}}}",
                json_str(&r.feature),
                r.removal_rank,
                format_float(r.t_value),
                r.coefficient_sign,
                format_float(r.p_adjusted),
                class
            );
        }
        out.push_str(if self.records.is_empty() {
            "],\n"
        } else {
            "\n  ],\n"
        });
        let requested = self.requested_task.map_or("auto", |t| t.name());
        let _ = writeln!(
            out,
            "  \"config\": {{\"alpha\": {}, \"threshold\": {}, \"seed\": {}, \"task_requested\": {}, \"n_classes\": {}}}",
            format_float(self.options.l1_weight),
            format_float(self.options.threshold),
            self.options.seed,
            json_str(requested),
            self.task.n_classes()
        );
        out.push_str("}\n");
        out
    }
}

/// Writes Shapley values as CSV: `row_index, class, <features>, base_value,
/// margin_prediction`, one line per row and class.
pub fn write_shap_csv<W: Write>(
    shap: &ShapMatrix,
    ensemble: &TreeEnsemble,
    rows: &[f64],
    writer: W,
) -> Result<(), csv::Error> {
    let p = shap.n_features();
    let k = shap.n_classes();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["row_index".to_string(), "class".to_string()];
    header.extend(shap.feature_names().iter().cloned());
    header.push("base_value".into());
    header.push("margin_prediction".into());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for r in 0..shap.n_rows() {
        let margin = ensemble
            .predict_margin(&rows[r * p..(r + 1) * p])
            .expect("row length checked when computing Shapley values");
        for (c, m) in margin.iter().enumerate().take(k) {
            record.clear();
            record.push(r.to_string());
            record.push(c.to_string());
            for f in 0..p {
                record.push(format_float(shap.get(r, f, c)));
            }
            record.push(format_float(shap.base_values()[c]));
            record.push(format_float(*m));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `threshold, n_selected, metric`; a missing metric is an empty cell.
pub fn write_sweep_csv<W: Write>(sweep: &ThresholdSweep, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "n_selected", "metric"])?;
    for row in &sweep.rows {
        let metric = row.metric.map(format_float).unwrap_or_default();
        let metric = if metric == "null" {
            "NaN".to_string()
        } else {
            metric
        };
        w.write_record([
            format_float(row.threshold),
            row.n_selected().to_string(),
            metric,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn expect_keys(
    obj: &serde_json::Map<String, Value>,
    path: &str,
    keys: &[&str],
) -> Result<(), SchemaError> {
    for key in keys {
        if !obj.contains_key(*key) {
            return Err(violation(path, format!("missing key `{key}`")));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(violation(path, format!("unexpected key `{extra}`")));
    }
    Ok(())
}

fn as_f64(v: &Value, path: &str) -> Result<f64, SchemaError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| violation(path, "expected a finite number"))
}

/// Checks a report document and returns its parsed form.
pub fn validate_report_json(text: &str) -> Result<Value, SchemaError> {
    let doc: Value = serde_json::from_str(text)?;
    let top = doc
        .as_object()
        .ok_or_else(|| violation("$", "expected an object"))?;
    expect_keys(
        top,
        "$",
        &["task", "threshold", "selected", "records", "config"],
    )?;
    let task = top["task"]
        .as_str()
        .ok_or_else(|| violation("$.task", "expected a string"))?;
    if !["regression", "binary", "multiclass"].contains(&task) {
        return Err(violation("$.task", format!("unknown task `{task}`")));
    }
    let threshold = as_f64(&top["threshold"], "$.threshold")?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(violation("$.threshold", "must be in (0,1]"));
    }
    let records = top["records"]
        .as_array()
        .ok_or_else(|| violation("$.records", "expected an array"))?;
    let mut names = Vec::with_capacity(records.len());
    let mut ranks = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let path = format!("$.records[{i}]");
        let obj = rec
            .as_object()
            .ok_or_else(|| violation(&path, "expected an object"))?;
        expect_keys(
            obj,
            &path,
            &[
                "feature",
                "removal_rank",
                "t_value",
                "coefficient_sign",
                "p_adjusted",
                "class_of_max_t",
            ],
        )?;
        names.push(
            obj["feature"]
                .as_str()
                .ok_or_else(|| violation(format!("{path}.feature"), "expected a string"))?
                .to_string(),
        );
        ranks.push(obj["removal_rank"].as_u64().ok_or_else(|| {
            violation(
                format!("{path}.removal_rank"),
                "expected a positive integer",
            )
        })?);
        as_f64(&obj["t_value"], &format!("{path}.t_value"))?;
        let sign = obj["coefficient_sign"].as_i64();
        if !matches!(sign, Some(-1..=1)) {
            return Err(violation(
                format!("{path}.coefficient_sign"),
                "expected -1, 0 or 1",
            ));
        }
        let p = as_f64(&obj["p_adjusted"], &format!("{path}.p_adjusted"))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(violation(format!("{path}.p_adjusted"), "must be in [0,1]"));
        }
        let class = &obj["class_of_max_t"];
        if !(class.is_null() || class.is_u64()) {
            return Err(violation(
                format!("{path}.class_of_max_t"),
                "expected an integer or null",
            ));
        }
        if (task == "multiclass") == class.is_null() {
            return Err(violation(
                format!("{path}.class_of_max_t"),
                "must be set exactly for multiclass tasks",
            ));
        }
    }
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    if sorted.iter().enumerate().any(|(i, &r)| r != i as u64 + 1) {
        return Err(violation(
            "$.records",
            "removal ranks are not a permutation of 1..n",
        ));
    }
    let selected = top["selected"]
        .as_array()
        .ok_or_else(|| violation("$.selected", "expected an array"))?;
    for (i, s) in selected.iter().enumerate() {
        let s = s
            .as_str()
            .ok_or_else(|| violation(format!("$.selected[{i}]"), "expected a string"))?;
        if !names.iter().any(|n| n == s) {
            return Err(violation(
                format!("$.selected[{i}]"),
                format!("`{s}` has no record"),
            ));
        }
    }
    let config = top["config"]
        .as_object()
        .ok_or_else(|| violation("$.config", "expected an object"))?;
    expect_keys(
        config,
        "$.config",
        &["alpha", "threshold", "seed", "task_requested", "n_classes"],
    )?;
    Ok(doc)
}

/// Checks a Shapley CSV, including local accuracy of every line within
/// `1e-9 · max(1, |margin|)`. Returns the number of data lines.
pub fn validate_shap_csv(text: &str) -> Result<usize, SchemaError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 5
        || &header[0] != "row_index"
        || &header[1] != "class"
        || &header[n - 2] != "base_value"
        || &header[n - 1] != "margin_prediction"
    {
        return Err(violation(
            "header",
            "expected row_index, class, <features>, base_value, margin_prediction",
        ));
    }
    let mut lines = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let path = format!("line {}", i + 2);
        for idx in 0..2 {
            rec[idx]
                .parse::<usize>()
                .map_err(|_| violation(&path, format!("`{}` is not an index", &header[idx])))?;
        }
        let nums = (2..n)
            .map(|c| {
                rec[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        violation(&path, format!("`{}` is not a finite number", &header[c]))
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let (phi, tail) = nums.split_at(nums.len() - 2);
        let (base, margin) = (tail[0], tail[1]);
        let total: f64 = phi.iter().sum::<f64>() + base;
        if (total - margin).abs() > 1e-9 * margin.abs().max(1.0) {
            return Err(violation(
                &path,
                format!("local accuracy: sum {total} vs margin {margin}"),
            ));
        }
        lines += 1;
    }
    Ok(lines)
}

/// Parsed sweep line.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepLine {
    pub threshold: f64,
    pub n_selected: usize,
    pub metric: Option<f64>,
}

/// Checks a sweep CSV and returns its lines.
pub fn validate_sweep_csv(text: &str) -> Result<Vec<SweepLine>, SchemaError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["threshold", "n_selected", "metric"] {
        return Err(violation(
            "header",
            "expected threshold, n_selected, metric",
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let path = format!("line {}", i + 2);
        let threshold: f64 = rec[0]
            .parse()
            .map_err(|_| violation(&path, "threshold is not a number"))?;
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(violation(&path, "threshold must be in (0,1]"));
        }
        let n_selected = rec[1]
            .parse()
            .map_err(|_| violation(&path, "n_selected is not a count"))?;
        let metric = if rec[2].is_empty() {
            None
        } else {
            Some(
                rec[2]
                    .parse::<f64>()
                    .map_err(|_| violation(&path, "metric is not a number"))?,
            )
        };
        out.push(SweepLine {
            threshold,
            n_selected,
            metric,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{EliminationRecord, SelectOptions};
    use crate::stats::TaskKind;

    fn report() -> SelectionReport {
        SelectionReport {
            task: TaskKind::Regression,
            threshold: 0.05,
            records: vec![
                EliminationRecord {
                    feature: "b\"q".into(),
                    removal_rank: 1,
                    t_value: -2.0,
                    coefficient_sign: -1,
                    p_raw: 0.05,
                    p_adjusted: 0.05,
                    class_of_max_t: None,
                },
                EliminationRecord {
                    feature: "a".into(),
                    removal_rank: 2,
                    t_value: f64::INFINITY,
                    coefficient_sign: 1,
                    p_raw: 0.0,
                    p_adjusted: 0.0,
                    class_of_max_t: None,
                },
            ],
            selected: vec!["a".into()],
            options: SelectOptions::default(),
            requested_task: None,
        }
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            assert_eq!(
                format_float(v).parse::<f64>().unwrap().to_bits(),
                v.to_bits()
            );
        }
        assert_eq!(
            format_float(f64::INFINITY).parse::<f64>().unwrap(),
            f64::MAX
        );
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn report_json_validates_and_keeps_key_order() {
        let text = report().to_json();
        let doc = validate_report_json(&text).unwrap();
        assert_eq!(doc["records"][0]["feature"], "b\"q");
        assert_eq!(doc["records"][1]["t_value"].as_f64().unwrap(), f64::MAX);
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("task") < pos("threshold"));
        assert!(pos("selected") < pos("records"));
        assert!(pos("records") < pos("config"));
    }

    #[test]
    fn report_validator_rejects_bad_documents() {
        let good = report().to_json();
        for (from, to) in [
            ("\"removal_rank\": 2", "\"removal_rank\": 3"),
            ("\"coefficient_sign\": 1", "\"coefficient_sign\": 2"),
            ("\"task\": \"regression\"", "\"task\": \"ranking\""),
            ("\"selected\": [\"a\"]", "\"selected\": [\"zz\"]"),
            ("\"class_of_max_t\": null}", "\"class_of_max_t\": 0}"),
        ] {
            let bad = good.replacen(from, to, 1);
            assert_ne!(bad, good, "{from}");
            assert!(validate_report_json(&bad).is_err(), "{from}");
        }
    }

    #[test]
    fn shap_csv_validator_checks_local_accuracy() {
        let ok = "row_index,class,x,base_value,margin_prediction\n0,0,0.5,1.0,1.5\n";
        assert_eq!(validate_shap_csv(ok).unwrap(), 1);
        let bad = "row_index,class,x,base_value,margin_prediction\n0,0,0.5,1.0,1.6\n";
        assert!(validate_shap_csv(bad).is_err());
    }

    #[test]
    fn sweep_csv_round_trip() {
        let text = "threshold,n_selected,metric\n1e-3,2,0.5\n0.05,3,\n";
        let lines = validate_sweep_csv(text).unwrap();
        assert_eq!(lines[1].metric, None);
        assert_eq!(lines[0].n_selected, 2);
        assert!(validate_sweep_csv("threshold,n_selected,metric\n0,1,\n").is_err());
    }
}
