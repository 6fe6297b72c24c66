//! Covariate rows for the working-memory model.
//!
//! Each main trial becomes `(x_load, x_primacy, x_recency, y)` where load is
//! the set size, primacy is `1 / position` and recency is
//! `1 / (set_size - position + 1)`, all mean-centered with constants fitted
//! on the training set and reused verbatim when scoring new participants.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::paradigm::{ProbeType, TaskConfig, Trial};
use crate::store::SessionRecord;
use crate::{Error, Result};

/// Uncentered covariates for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCovariates {
    pub load: f64,
    pub primacy: f64,
    pub recency: f64,
    pub y: bool,
}

pub fn compute_raw_covariates(trial: &Trial, correct: bool) -> Result<RawCovariates> {
    if trial.is_practice {
        return Err(Error::InvalidInput(format!(
            "practice trial {} cannot enter the model",
            trial.index
        )));
    }
    let n = trial.set_size;
    let p = trial.target_position;
    if p < 1 || p > n {
        return Err(Error::InvalidInput(format!(
            "trial {}: target position {p} outside 1..={n}",
            trial.index
        )));
    }
    Ok(RawCovariates {
        load: f64::from(n),
        primacy: 1.0 / f64::from(p),
        recency: 1.0 / f64::from(n - p + 1),
        y: correct,
    })
}

/// A raw row tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub participant_id: Uuid,
    pub trial_index: u32,
    pub set_size: u32,
    pub probe_type: ProbeType,
    pub covariates: RawCovariates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRow {
    pub participant_id: Uuid,
    pub trial_index: u32,
    /// Raw (uncentered) set size, kept for hard-trial filtering.
    pub set_size: u32,
    pub probe_type: ProbeType,
    pub x_load: f64,
    pub x_primacy: f64,
    pub x_recency: f64,
    pub y: bool,
}

impl CovariateRow {
    /// Design vector `(1, load, primacy, recency)`.
    #[inline]
    pub fn x(&self) -> [f64; 4] {
        [1.0, self.x_load, self.x_primacy, self.x_recency]
    }
}

pub trait SetSized {
    fn set_size(&self) -> u32;
}

impl SetSized for RawRow {
    fn set_size(&self) -> u32 {
        self.set_size
    }
}

impl SetSized for CovariateRow {
    fn set_size(&self) -> u32 {
        self.set_size
    }
}

/// Which covariates are mean-centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringScope {
    #[default]
    All,
    /// Center set size only; primacy and recency stay raw.
    LoadOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringStats {
    pub mean_load: f64,
    pub mean_primacy: f64,
    pub mean_recency: f64,
    pub scope: CenteringScope,
    /// Fingerprint of the rows the means were computed from.
    pub source: String,
}

impl CenteringStats {
    pub fn zero() -> Self {
        Self {
            mean_load: 0.0,
            mean_primacy: 0.0,
            mean_recency: 0.0,
            scope: CenteringScope::All,
            source: "zero".into(),
        }
    }

    /// Expected covariate means of the paradigm itself: set sizes balanced,
    /// probe type a fair coin, target position uniform over the legal range.
    pub fn design_expectation(config: &TaskConfig) -> Self {
        let sizes: Vec<u32> = (config.set_size_min..=config.set_size_max).collect();
        let mut primacy = 0.0;
        let mut recency = 0.0;
        for &n in &sizes {
            let nf = f64::from(n);
            let pos_p: f64 = (1..=n).map(|p| 1.0 / f64::from(p)).sum::<f64>() / nf;
            let succ_p: f64 = (2..=n).map(|p| 1.0 / f64::from(p)).sum::<f64>() / (nf - 1.0);
            // recency at target p is 1/(n-p+1); over p in 2..=n that is 1/1..1/(n-1)
            let succ_r: f64 = (1..n).map(|k| 1.0 / f64::from(k)).sum::<f64>() / (nf - 1.0);
            primacy += 0.5 * (pos_p + succ_p);
            recency += 0.5 * (pos_p + succ_r);
        }
        let k = sizes.len() as f64;
        Self {
            mean_load: sizes.iter().map(|&n| f64::from(n)).sum::<f64>() / k,
            mean_primacy: primacy / k,
            mean_recency: recency / k,
            scope: CenteringScope::All,
            source: "design".into(),
        }
    }

    fn is_finite(&self) -> bool {
        self.mean_load.is_finite() && self.mean_primacy.is_finite() && self.mean_recency.is_finite()
    }
}

/// Order-independent mean: summing sorted values makes the result identical
/// under any permutation of the input.
fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn fingerprint(rows: &[RawRow]) -> String {
    let mut keys: Vec<(Uuid, u32)> = rows.iter().map(|r| (r.participant_id, r.trial_index)).collect();
    keys.sort_unstable();
    let mut h = Sha256::new();
    for (id, t) in keys {
        h.update(id.as_bytes());
        h.update(t.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// Grand means over all provided trials.
pub fn fit_centering(rows: &[RawRow], scope: CenteringScope) -> Result<CenteringStats> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("cannot fit centering on zero rows".into()));
    }
    let col = |f: fn(&RawCovariates) -> f64| sorted_mean(rows.iter().map(|r| f(&r.covariates)).collect());
    let (mean_primacy, mean_recency) = match scope {
        CenteringScope::All => (col(|c| c.primacy), col(|c| c.recency)),
        CenteringScope::LoadOnly => (0.0, 0.0),
    };
    let stats = CenteringStats {
        mean_load: col(|c| c.load),
        mean_primacy,
        mean_recency,
        scope,
        source: fingerprint(rows),
    };
    if !stats.is_finite() {
        return Err(Error::InvalidInput("non-finite covariate means".into()));
    }
    Ok(stats)
}

pub fn apply_centering(rows: &[RawRow], stats: &CenteringStats) -> Vec<CovariateRow> {
    rows.iter()
        .map(|r| CovariateRow {
            participant_id: r.participant_id,
            trial_index: r.trial_index,
            set_size: r.set_size,
            probe_type: r.probe_type,
            x_load: r.covariates.load - stats.mean_load,
            x_primacy: r.covariates.primacy - stats.mean_primacy,
            x_recency: r.covariates.recency - stats.mean_recency,
            y: r.covariates.y,
        })
        .collect()
}

/// Keeps rows whose raw set size is at least `min_set_size`.
pub fn filter_hard_trials<R: SetSized + Clone>(rows: &[R], min_set_size: u32) -> Vec<R> {
    rows.iter()
        .filter(|r| r.set_size() >= min_set_size)
        .cloned()
        .collect()
}

/// Raw rows for every graded main trial of a session. Timed-out or invalid
/// responses count as incorrect; trials with no response are skipped.
pub fn rows_from_session(session: &SessionRecord) -> Result<Vec<RawRow>> {
    let mut rows = Vec::new();
    for rec in session.trials.iter().filter(|t| !t.trial.is_practice) {
        let Some(resp) = &rec.response else { continue };
        rows.push(RawRow {
            participant_id: session.participant_id,
            trial_index: rec.trial.index,
            set_size: rec.trial.set_size,
            probe_type: rec.trial.probe_type,
            covariates: compute_raw_covariates(&rec.trial, resp.correct)?,
        });
    }
    Ok(rows)
}

pub fn rows_from_sessions<'a>(
    sessions: impl IntoIterator<Item = &'a SessionRecord>,
) -> Result<Vec<RawRow>> {
    let mut out = Vec::new();
    for s in sessions {
        out.extend(rows_from_session(s)?);
    }
    Ok(out)
}
