//! Telling human participants from machines with a fitted normative model.

mod roc;
mod score;

pub use roc::{pair_auroc, roc, roc_by_type, threshold_at_fnr, OperatingPoint, RocCurve, RocSet};
pub use score::{
    marginal_loglik, prepare_rows, score_joint, score_pointwise, scoring_seed, ScoreReport, ScoringModel,
    ScoringOptions, DEFAULT_MIN_SET_SIZE, DEFAULT_M_JOINT, DEFAULT_M_POINTWISE, DEFAULT_THIN_TO,
};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::store::SessionRecord;

pub const DEFAULT_SCREEN_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenHit {
    pub participant_id: Uuid,
    pub participant_type: String,
    pub accuracy: f64,
}

/// Participants whose mean main-trial accuracy is at least `threshold`.
/// Sessions without graded main trials are skipped.
pub fn accuracy_screen<'a>(sessions: impl IntoIterator<Item = &'a SessionRecord>, threshold: f64) -> Vec<ScreenHit> {
    sessions
        .into_iter()
        .filter_map(|s| {
            let acc = s.main_accuracy()?;
            (acc >= threshold).then(|| ScreenHit {
                participant_id: s.participant_id,
                participant_type: s.participant_type.clone(),
                accuracy: acc,
            })
        })
        .collect()
}
