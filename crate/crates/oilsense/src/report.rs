//! JSON report envelopes, aligned text tables and CSV loss logs.

use std::fmt::Write as _;

use oilsense_core::enhance::EnhanceReport;
use oilsense_core::pipeline::{AblationRow, EvalReport, InferenceReport};
use oilsense_core::relnet::EpochStats;
use serde::Serialize;

pub const BASELINE_NAME: &str = "confidence threshold (no logic)";
pub const PIPELINE_NAME: &str = "relations + rules";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhanceFileReport {
    pub input: String,
    pub output: String,
    #[serde(flatten)]
    pub report: EnhanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferFileReport {
    pub config_hash: String,
    pub seed: u64,
    pub scene: String,
    pub enhancement: Option<EnhanceReport>,
    #[serde(flatten)]
    pub inference: InferenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalFileReport {
    pub config_hash: String,
    pub seed: u64,
    pub baseline: &'static str,
    #[serde(flatten)]
    pub eval: EvalReport,
    pub relation_ablation: Option<Vec<AblationRow>>,
}

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Renders rows under `headers` with every column padded to its widest cell.
/// The first column is left-aligned, the rest right-aligned.
pub fn render_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut out = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "{cell:>w$}");
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(&mut headers.iter().copied());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

/// Normal / leak / total F1 for the baseline and the full pipeline.
pub fn decision_table(r: &EvalReport) -> String {
    let row = |name: &str, m: &oilsense_core::pipeline::DecisionMetrics, ap: &oilsense_core::eval::ApSummary| {
        vec![name.to_string(), f3(m.normal.f1), f3(m.leak.f1), f3(m.total_f1), f3(ap.ap50), f3(ap.map)]
    };
    render_table(
        &["model", "normal", "leak", "total", "AP50", "mAP"],
        &[row(BASELINE_NAME, &r.baseline, &r.baseline_ap), row(PIPELINE_NAME, &r.pipeline, &r.pipeline_ap)],
    )
}

/// Per-relation and total F1 for each input variant.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            vec![r.inputs.describe().to_string(), f3(m.above.f1), f3(m.nearby.f1), f3(m.other.f1), f3(m.total_f1)]
        })
        .collect();
    render_table(&["inputs", "above", "nearby", "other", "total"], &body)
}

pub fn loss_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_acc\n");
    for e in history {
        let _ = writeln!(out, "{},{:?},{:?}", e.epoch, e.loss, e.train_acc);
    }
    out
}

pub fn rule_loss_csv(history: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{i},{l:?}");
    }
    out
}
