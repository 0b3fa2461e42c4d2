use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::Result;
use crate::leakage::LeakageEstimate;
use crate::pipeline::{TaiConfig, TaiReport};

/// A document accepted by [`write_report_json`].
#[derive(Clone, Copy, Debug)]
pub enum Report<'a> {
    Leakage {
        estimate: &'a LeakageEstimate,
        seed: u64,
    },
    Tai {
        report: &'a TaiReport,
        config: &'a TaiConfig,
        seed: u64,
        /// Wall-clock timings make the output differ between runs.
        timings: bool,
    },
}

impl Report<'_> {
    pub fn to_json(&self) -> Value {
        match *self {
            Report::Leakage { estimate, seed } => leakage_json(estimate, seed),
            Report::Tai {
                report,
                config,
                seed,
                timings,
            } => tai_json(report, config, seed, timings),
        }
    }
}

/// Finite values rounded to 9 significant digits; infinities become the
/// strings `"inf"` / `"-inf"` and NaN becomes `null`.
pub fn json_number(x: f64) -> Value {
    if x.is_nan() {
        Value::Null
    } else if x.is_infinite() {
        Value::String(if x > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
        json!(rounded)
    }
}

fn opt_number(x: Option<f64>) -> Value {
    x.map_or(Value::Null, json_number)
}

pub fn leakage_json(est: &LeakageEstimate, seed: u64) -> Value {
    let t = &est.terms;
    json!({
        "leakage_nats": json_number(est.value),
        "seed": seed,
        "inducing_points": est.m_bar.nrows(),
        "input_dim": est.model.input_dim(),
        "output_dim": est.model.output_dim(),
        "iterations": est.iterations,
        "a_bar": json_number(est.a_bar),
        "terms": {
            "log_norm": json_number(t.log_norm),
            "log_precision": json_number(t.log_precision),
            "fit": json_number(t.fit),
            "spread": json_number(t.spread),
            "kl_gaussian": json_number(t.kl_gaussian),
            "kl_gamma": json_number(t.kl_gamma),
        },
    })
}

pub fn tai_json(report: &TaiReport, cfg: &TaiConfig, seed: u64, timings: bool) -> Value {
    let mut doc = Map::new();
    doc.insert("privacy_leakage_nats".into(), json_number(report.privacy_leakage));
    doc.insert("interpretability_nats".into(), json_number(report.interpretability));
    doc.insert("transferability_nats".into(), json_number(report.transferability));
    doc.insert("accuracy_source".into(), opt_number(report.accuracies.source));
    doc.insert("accuracy_target".into(), opt_number(report.accuracies.target));
    doc.insert("accuracy_multitask".into(), opt_number(report.accuracies.multitask));
    doc.insert("epsilon".into(), json_number(cfg.dp.epsilon));
    doc.insert("delta".into(), json_number(cfg.dp.delta));
    doc.insert("d".into(), json_number(cfg.dp.d));
    doc.insert("seed".into(), json!(seed));
    doc.insert("subspace_dim".into(), json!(report.maps.n_st));
    doc.insert("num_classes".into(), json!(report.source_classifier.num_classes()));
    doc.insert("source_dim".into(), json!(report.maps.source_dim()));
    doc.insert("target_dim".into(), json!(report.maps.target_dim()));
    doc.insert(
        "config".into(),
        json!({
            "source_layers": cfg.source_layers,
            "source_r_max": json_number(cfg.source_r_max),
            "target_initial_layers": cfg.target_initial_layers,
            "target_initial_r_max": json_number(cfg.target_initial_r_max),
            "target_layers": cfg.target_layers,
            "target_r_max": json_number(cfg.target_r_max),
            "it_max": cfg.it_max(),
            "measure_sample_cap": cfg.measure_sample_cap,
        }),
    );
    doc.insert("predictions".into(), json!(report.predictions));
    if timings {
        let t: Map<String, Value> = report
            .timings
            .iter()
            .map(|(name, secs)| (name.to_string(), json_number(*secs)))
            .collect();
        doc.insert("timings_seconds".into(), Value::Object(t));
    }
    Value::Object(doc)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values always serialize");
    s.push('\n');
    s
}

pub fn write_report_json(report: &Report<'_>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json_string(&report.to_json()))?;
    Ok(())
}
