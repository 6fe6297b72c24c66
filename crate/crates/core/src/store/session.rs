use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::check_major;
use crate::paradigm::{CatchGrade, CatchQuestion, SessionPlan, TaskConfig, Trial};
use crate::{Error, Result};

pub const SESSION_SCHEMA_VERSION: &str = "1.0";
pub const SESSION_SCHEMA_MAJOR: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct SessionRecord {
    pub schema_version: String,
    pub participant_id: Uuid,
    /// e.g. `sim-human`, `sim-perfect`, `online`, `llm:gpt-5-mini:wm`.
    pub participant_type: String,
    /// False when the run was aborted; such sessions are kept for audit but
    /// excluded from fitting and scoring.
    pub complete: bool,
    pub seed: u64,
    pub task_config: TaskConfig,
    pub consent: bool,
    pub ai_self_report: SelfReport,
    pub quiz_attempts: Vec<QuizAttempt>,
    pub gate_code_hex: String,
    pub gate_entry: Option<String>,
    pub catch: CatchRecord,
    pub trials: Vec<TrialRecord>,
    pub timestamps: Timestamps,
    pub client: ClientMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct SelfReport {
    /// Raw answer to "Are you an AI?"; `None` when not answered.
    pub answer: Option<String>,
    pub claims_ai: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct QuizAttempt {
    /// Chosen option index per quiz item; `None` for an unparseable choice.
    pub answers: Vec<Option<usize>>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CatchRecord {
    pub question: CatchQuestion,
    pub answer: Option<String>,
    pub grade: CatchGrade,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TrialRecord {
    pub trial: Trial,
    pub response: Option<Response>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Response {
    pub answer: Option<String>,
    pub correct: bool,
    pub invalid: bool,
    pub timed_out: bool,
    /// Recorded for auditing only; never used by the model.
    pub latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Timestamps {
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ClientSource {
    Web,
    Simulator,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ClientMeta {
    pub source: ClientSource,
    pub user_agent: Option<String>,
    pub endpoint: Option<String>,
    pub provider: Option<String>,
    pub model: Option<String>,
    pub prompt: Option<String>,
}

impl ClientMeta {
    pub fn simulator() -> Self {
        Self {
            source: ClientSource::Simulator,
            user_agent: None,
            endpoint: None,
            provider: None,
            model: None,
            prompt: None,
        }
    }
}

impl SessionRecord {
    /// A record for `plan` with every response still empty.
    pub fn from_plan(
        plan: &SessionPlan,
        participant_id: Uuid,
        participant_type: impl Into<String>,
        client: ClientMeta,
    ) -> Self {
        Self {
            schema_version: SESSION_SCHEMA_VERSION.to_string(),
            participant_id,
            participant_type: participant_type.into(),
            complete: false,
            seed: plan.seed,
            task_config: plan.config.clone(),
            consent: true,
            ai_self_report: SelfReport {
                answer: None,
                claims_ai: None,
            },
            quiz_attempts: Vec::new(),
            gate_code_hex: plan.gate_code_hex.clone(),
            gate_entry: None,
            catch: CatchRecord {
                question: plan.catch_question.clone(),
                answer: None,
                grade: CatchGrade::Skipped,
            },
            trials: plan
                .trials
                .iter()
                .map(|t| TrialRecord {
                    trial: t.clone(),
                    response: None,
                })
                .collect(),
            timestamps: Timestamps {
                started_ms: 0,
                finished_ms: None,
            },
            client,
        }
    }

    pub fn main_trials(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| !t.trial.is_practice)
    }

    /// Mean correctness over answered main trials; `None` if there are none.
    pub fn main_accuracy(&self) -> Option<f64> {
        let (n, k) = self
            .main_trials()
            .filter_map(|t| t.response.as_ref())
            .fold((0usize, 0usize), |(n, k), r| (n + 1, k + usize::from(r.correct)));
        (n > 0).then(|| k as f64 / n as f64)
    }

    pub fn invalid_count(&self) -> usize {
        self.main_trials()
            .filter_map(|t| t.response.as_ref())
            .filter(|r| r.invalid)
            .count()
    }

    /// Semantic checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        check_major("session schema", &self.schema_version, SESSION_SCHEMA_MAJOR)?;
        let schema = |path: String, message: String| Err(Error::Schema { path, message });
        if self.participant_type.trim().is_empty() {
            return schema("participant_type".into(), "must be non-empty".into());
        }
        self.task_config
            .validate()
            .map_err(|e| Error::Schema {
                path: "task_config".into(),
                message: e.to_string(),
            })?;
        for (i, rec) in self.trials.iter().enumerate() {
            if let Err(e) = rec.trial.validate() {
                return schema(format!("trials[{i}].trial"), e.to_string());
            }
            match &rec.response {
                None if self.complete => {
                    return schema(
                        format!("trials[{i}].response"),
                        "complete session has a trial without a response".into(),
                    )
                }
                None => {}
                Some(r) => {
                    if r.answer.is_some() == r.timed_out {
                        return schema(
                            format!("trials[{i}].response"),
                            "exactly one of an answer or a timeout marker is required".into(),
                        );
                    }
                    if r.correct && (r.invalid || r.timed_out) {
                        return schema(
                            format!("trials[{i}].response.correct"),
                            "invalid or timed-out responses cannot be correct".into(),
                        );
                    }
                }
            }
        }
        if self.complete {
            let mut sizes: Vec<u32> = self.main_trials().map(|t| t.trial.set_size).collect();
            sizes.sort_unstable();
            if sizes != self.task_config.balanced_set_sizes() {
                return schema(
                    "trials".into(),
                    "main-trial set sizes do not match the balanced design of task_config".into(),
                );
            }
        }
        if self.gate_code_hex.is_empty() || !self.gate_code_hex.chars().all(|c| c.is_ascii_hexdigit()) {
            return schema("gate_code_hex".into(), "must be a hexadecimal string".into());
        }
        Ok(())
    }
}

/// JSON-Schema document for [`SessionRecord`], as published in
/// `schema/session.schema.json`.
pub fn session_schema() -> String {
    let mut schema = schemars::schema_for!(SessionRecord);
    schema.insert("$id".into(), format!("wmprobe/session/{SESSION_SCHEMA_VERSION}").into());
    let mut s = serde_json::to_string_pretty(&schema).expect("schema serializes");
    s.push('\n');
    s
}

pub fn session_to_json(record: &SessionRecord) -> Result<String> {
    record.validate()?;
    let mut s = serde_json::to_string_pretty(record)?;
    s.push('\n');
    Ok(s)
}

pub fn session_from_json(text: &str) -> Result<SessionRecord> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let record: SessionRecord =
        serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    record.validate()?;
    Ok(record)
}

/// Writes `record` to `path` through a temporary file so readers never see a
/// partial session.
pub fn write_session(path: &Path, record: &SessionRecord) -> Result<()> {
    let text = session_to_json(record)?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_session(path: &Path) -> Result<SessionRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    session_from_json(&text).map_err(|e| match e {
        Error::Schema { path: p, message } => Error::Schema {
            path: p,
            message: format!("{message} (in {})", path.display()),
        },
        other => other,
    })
}

/// A directory of session files, `<dir>/<participant_id>.json`.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    /// Sorted by participant id, independent of directory enumeration order.
    pub sessions: Vec<SessionRecord>,
}

impl Cohort {
    pub fn new(mut sessions: Vec<SessionRecord>) -> Self {
        sessions.sort_by_key(|s| s.participant_id);
        Self { sessions }
    }

    pub fn session_path(dir: &Path, id: Uuid) -> PathBuf {
        dir.join(format!("{id}.json"))
    }

    pub fn transcript_path(dir: &Path, id: Uuid) -> PathBuf {
        dir.join(format!("{id}.transcript.jsonl"))
    }

    /// Adds a session file to `dir`, refusing to overwrite an existing one.
    pub fn append(dir: &Path, record: &SessionRecord) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = Self::session_path(dir, record.participant_id);
        if path.exists() {
            return Err(Error::InvalidInput(format!(
                "session {} already exists in {}",
                record.participant_id,
                dir.display()
            )));
        }
        write_session(&path, record)?;
        Ok(path)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut sessions = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                sessions.push(read_session(&path)?);
            }
        }
        Ok(Self::new(sessions))
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn by_type(&self) -> BTreeMap<&str, Vec<&SessionRecord>> {
        let mut map: BTreeMap<&str, Vec<&SessionRecord>> = BTreeMap::new();
        for s in &self.sessions {
            map.entry(s.participant_type.as_str()).or_default().push(s);
        }
        map
    }

    /// Complete sessions whose type equals `label`.
    pub fn with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a SessionRecord> {
        self.sessions
            .iter()
            .filter(move |s| s.complete && s.participant_type == label)
    }

    pub fn get(&self, id: Uuid) -> Option<&SessionRecord> {
        self.sessions
            .binary_search_by_key(&id, |s| s.participant_id)
            .ok()
            .map(|i| &self.sessions[i])
    }
}
