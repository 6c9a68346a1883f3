//! Per-step and per-epoch training records.
//!
//! JSON lines: one [`MetricsRecord`] object per line, fields as named below.
//! CSV summary: one row per epoch record with the columns of [`CSV_HEADER`];
//! list-valued fields are joined with `;` and absent values are left empty.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Step,
    Epoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub kind: RecordKind,
    /// Zero-based epoch index.
    pub epoch: usize,
    /// Global iteration counter; for epoch records, the number of iterations run so far.
    pub step: usize,
    /// Queue warm-up iteration (no losses computed, no updates applied).
    pub warmup: bool,
    pub l_contrast: Option<f64>,
    pub l_consist: Option<f64>,
    pub l_u: Option<f64>,
    /// Probe cross-entropy on the labeled batch at the updated encoder.
    pub ce: Option<f64>,
    /// Mean of Ω − g per configured length, in configuration order.
    pub k: Vec<f64>,
    /// e^k/(1+e^k)² per length, when a PMNN update was attempted.
    pub coefficient: Vec<f64>,
    /// Cumulative count of skipped PMNN updates (denominator guard).
    pub guard_count: usize,
    /// Cumulative count of degenerate projections seen by the query encoder.
    pub degenerate_embeddings: usize,
    pub probe_accuracy: Option<f64>,
    pub dacl: Option<f64>,
    /// Encoder learning rate used by this step.
    pub lr: f64,
    /// Seconds since training started; only filled when timing is enabled.
    pub wall_clock: Option<f64>,
}

impl MetricsRecord {
    pub fn new(kind: RecordKind, epoch: usize, step: usize) -> Self {
        Self {
            kind,
            epoch,
            step,
            warmup: false,
            l_contrast: None,
            l_consist: None,
            l_u: None,
            ce: None,
            k: Vec::new(),
            coefficient: Vec::new(),
            guard_count: 0,
            degenerate_embeddings: 0,
            probe_accuracy: None,
            dacl: None,
            lr: 0.0,
            wall_clock: None,
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        let mut s = serde_json::to_string(self).map_err(|e| Error::input(format!("metrics record: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::input(format!("metrics record: {e}")))
    }
}

pub const CSV_HEADER: &str =
    "epoch,step,l_contrast,l_consist,l_u,ce,k,coefficient,guard_count,degenerate_embeddings,probe_accuracy,dacl,lr,wall_clock";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// CSV summary of the epoch records in `records`.
pub fn csv_summary(records: &[MetricsRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records.iter().filter(|r| r.kind == RecordKind::Epoch) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.step,
            opt(r.l_contrast),
            opt(r.l_consist),
            opt(r.l_u),
            opt(r.ce),
            list(&r.k),
            list(&r.coefficient),
            r.guard_count,
            r.degenerate_embeddings,
            opt(r.probe_accuracy),
            opt(r.dacl),
            r.lr,
            opt(r.wall_clock)
        );
    }
    out
}

/// Writes the JSON-lines stream and the CSV summary atomically.
pub fn write_metrics(jsonl: &Path, csv: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut lines = String::new();
    for r in records {
        lines.push_str(&r.to_json_line()?);
    }
    write_atomic(jsonl, lines.as_bytes())?;
    write_atomic(csv, csv_summary(records).as_bytes())
}
