// SPDX-License-Identifier: Apache-2.0

//! Node-level metrics (Trojan = positive), reports, leave-one-out
//! cross-validation and grid search.

mod grid;
mod loocv;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureError;
use crate::gnn::{GnnError, ModelConfig};
use crate::netlist::Label;

pub use grid::{default_grid, grid_search, select_best, GridPoint, GridResult};
pub use loocv::{loocv, stats_checksum, FoldInfo, LoocvResult, Sample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 netlists, got {0}")]
    InsufficientData(usize),
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("report: {0}")]
    Format(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Confusion counts with Trojan as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub r#fn: u64,
}

impl Confusion {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Confusion {
        Confusion { tp, tn, fp, r#fn: fn_ }
    }

    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Confusion {
        assert_eq!(truth.len(), predicted.len(), "label vectors must align");
        let mut c = Confusion::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t.is_trojan(), p.is_trojan()) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.r#fn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.r#fn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Recall, precision, F1 and accuracy; any `0/0` is 0.
pub fn metrics(c: &Confusion) -> Metrics {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.r#fn as f64);
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    Metrics {
        recall,
        precision,
        f1: ratio(2.0 * precision * recall, precision + recall),
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
    }
}

/// Unweighted mean over rows.
pub fn macro_average(rows: &[Metrics]) -> Metrics {
    let n = rows.len() as f64;
    if rows.is_empty() {
        return Metrics::default();
    }
    Metrics {
        recall: rows.iter().map(|m| m.recall).sum::<f64>() / n,
        precision: rows.iter().map(|m| m.precision).sum::<f64>() / n,
        f1: rows.iter().map(|m| m.f1).sum::<f64>() / n,
        accuracy: rows.iter().map(|m| m.accuracy).sum::<f64>() / n,
    }
}

/// Three-decimal rendering, ties rounded up. The value is first printed to
/// nine decimals so that binary artifacts such as `0.8174999…` round as the
/// decimal `0.8175` would.
pub fn fmt3(x: f64) -> String {
    let s = format!("{:.9}", x.abs());
    let (int, frac) = s.split_once('.').expect("fixed-point output has a dot");
    let mut milli: u64 = int.parse::<u64>().expect("integer part") * 1000 + frac[..3].parse::<u64>().expect("fraction");
    if frac.as_bytes()[3] >= b'5' {
        milli += 1;
    }
    let sign = if x < 0.0 && milli != 0 { "-" } else { "" };
    format!("{sign}{}.{:03}", milli / 1000, milli % 1000)
}

/// [`fmt3`] as a number.
pub fn round3(x: f64) -> f64 {
    fmt3(x).parse().expect("fmt3 yields a number")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub netlist: String,
    pub confusion: Confusion,
    pub metrics: Metrics,
}

/// Node totals in reports include the primary-input and primary-output
/// port nodes.
pub const COUNTING_CONVENTION: &str = "node counts include one node per primary input and primary output port";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
    pub average: Metrics,
    pub config: Option<ModelConfig>,
    pub counting: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "text" | "table" => Ok(ReportFormat::Text),
            _ => Err(format!("unknown report format `{s}` (expected csv, json or text)")),
        }
    }
}

const HEADER: [&str; 9] = ["Netlist", "TN", "FP", "FN", "TP", "Recall", "Precision", "F1", "Accuracy"];

impl MetricsReport {
    pub fn new(rows: Vec<ReportRow>, config: Option<ModelConfig>) -> MetricsReport {
        let average = macro_average(&rows.iter().map(|r| r.metrics).collect::<Vec<_>>());
        MetricsReport { rows, average, config, counting: COUNTING_CONVENTION.to_string() }
    }

    pub fn from_confusions(rows: Vec<(String, Confusion)>, config: Option<ModelConfig>) -> MetricsReport {
        let rows = rows.into_iter().map(|(netlist, c)| ReportRow { netlist, confusion: c, metrics: metrics(&c) }).collect();
        MetricsReport::new(rows, config)
    }

    fn cells(&self) -> Vec<[String; 9]> {
        let mut out: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                let c = r.confusion;
                [
                    r.netlist.clone(),
                    c.tn.to_string(),
                    c.fp.to_string(),
                    c.r#fn.to_string(),
                    c.tp.to_string(),
                    fmt3(r.metrics.recall),
                    fmt3(r.metrics.precision),
                    fmt3(r.metrics.f1),
                    fmt3(r.metrics.accuracy),
                ]
            })
            .collect();
        if !self.rows.is_empty() {
            let a = self.average;
            out.push([
                "Average".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                fmt3(a.recall),
                fmt3(a.precision),
                fmt3(a.f1),
                fmt3(a.accuracy),
            ]);
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            ReportFormat::Csv => {
                let mut s = HEADER.join(",");
                s.push('\n');
                for row in self.cells() {
                    s.push_str(&row.join(","));
                    s.push('\n');
                }
                s
            }
            ReportFormat::Text => {
                let cells = self.cells();
                let mut width: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
                for row in &cells {
                    for (w, c) in width.iter_mut().zip(row) {
                        *w = (*w).max(c.len());
                    }
                }
                let line = |row: &[String]| {
                    let mut s = String::new();
                    for (i, (c, w)) in row.iter().zip(&width).enumerate() {
                        if i == 0 {
                            s.push_str(&format!("{c:<w$}"));
                        } else {
                            s.push_str(&format!("  {c:>w$}"));
                        }
                    }
                    s.trim_end().to_string() + "\n"
                };
                let mut s = line(&HEADER.map(String::from));
                for row in &cells {
                    s.push_str(&line(row));
                }
                s.push_str(&format!("# {}\n", self.counting));
                s
            }
        }
    }

    pub fn from_json(source: &str) -> Result<MetricsReport, EvalError> {
        serde_json::from_str(source).map_err(|e| EvalError::Format(e.to_string()))
    }
}
