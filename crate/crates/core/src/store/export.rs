//! CSV exports: covariate rows, score reports, ROC points, AUROC tables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::anomaly::{RocCurve, ScoreReport};
use crate::design::CovariateRow;
use crate::{Error, Result};

/// A score report plus where the participant came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredParticipant {
    pub report: ScoreReport,
    /// Empty for humans and simulators.
    pub provider: String,
    pub model: String,
}

/// One line of the detection table: one model backbone and prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocTableRow {
    pub provider: String,
    pub model: String,
    pub participant_type: String,
    pub auroc: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{other:?}")),
    })
}

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn write_rows_csv(path: &Path, rows: &[CovariateRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const SCORE_HEADER: [&str; 10] = [
    "participant_id",
    "participant_type",
    "provider",
    "model",
    "n_trials_scored",
    "mean_lppd",
    "joint_lpd",
    "scored_set_size_min",
    "m",
    "n_posterior_draws",
];

pub fn write_scores_csv(path: &Path, scores: &[ScoredParticipant]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SCORE_HEADER)?;
    for s in scores {
        let r = &s.report;
        w.write_record([
            r.participant_id.to_string(),
            r.participant_type.clone(),
            s.provider.clone(),
            s.model.clone(),
            r.n_trials_scored.to_string(),
            fmt_f64(r.mean_lppd),
            r.joint_lpd.map(fmt_f64).unwrap_or_default(),
            r.scored_set_size_min.to_string(),
            r.m.to_string(),
            r.n_posterior_draws.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoredParticipant>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{other:?}")),
    })?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SCORE_HEADER {
        return Err(Error::Parse(format!("{}: unexpected score CSV header", path.display())));
    }
    let bad = |line: usize, field: &str| Error::Parse(format!("{}: line {line}: bad {field}", path.display()));
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| get(j).parse::<f64>().map_err(|_| bad(line, SCORE_HEADER[j]));
        let int = |j: usize| get(j).parse::<usize>().map_err(|_| bad(line, SCORE_HEADER[j]));
        out.push(ScoredParticipant {
            report: ScoreReport {
                participant_id: Uuid::parse_str(get(0)).map_err(|_| bad(line, "participant_id"))?,
                participant_type: get(1).to_string(),
                n_trials_scored: int(4)?,
                mean_lppd: num(5)?,
                joint_lpd: if get(6).is_empty() { None } else { Some(num(6)?) },
                scored_set_size_min: int(7)? as u32,
                m: int(8)?,
                n_posterior_draws: int(9)?,
            },
            provider: get(2).to_string(),
            model: get(3).to_string(),
        });
    }
    Ok(out)
}

/// Long format: one line per curve point.
pub fn write_roc_csv<'a>(path: &Path, curves: impl IntoIterator<Item = &'a RocCurve>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["positive_label", "negative_label", "threshold", "tpr", "fpr", "auroc"])?;
    for c in curves {
        for i in 0..c.thresholds.len() {
            w.write_record([
                c.positive_label.clone(),
                c.negative_label.clone(),
                fmt_f64(c.thresholds[i]),
                fmt_f64(c.tpr[i]),
                fmt_f64(c.fpr[i]),
                fmt_f64(c.auroc),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_auroc_table_csv(path: &Path, rows: &[AurocTableRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
