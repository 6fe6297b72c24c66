//! Persistence: session files, cohort directories, fit artifacts, CSV
//! exports, and seeded train/held-out splits.

mod artifact;
mod export;
mod session;
mod split;

pub use artifact::{FitArtifact, FitHeader, FitProvenance, FIT_MAGIC, FIT_SCHEMA_MAJOR, FIT_SCHEMA_VERSION};
pub use export::{
    read_scores_csv, write_auroc_table_csv, write_roc_csv, write_rows_csv, write_scores_csv,
    AurocTableRow, ScoredParticipant,
};
pub use session::{
    read_session, session_from_json, session_schema, session_to_json, write_session, CatchRecord, ClientMeta,
    ClientSource, Cohort, QuizAttempt, Response, SelfReport, SessionRecord, Timestamps,
    TrialRecord, SESSION_SCHEMA_MAJOR, SESSION_SCHEMA_VERSION,
};
pub use split::{split_cohort, Split};

/// Checks that a `"major.minor"` version string has the expected major.
pub(crate) fn check_major(what: &'static str, version: &str, expected: u32) -> crate::Result<()> {
    let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(expected) {
        Ok(())
    } else {
        Err(crate::Error::Version {
            what,
            found: version.to_string(),
            expected,
        })
    }
}
