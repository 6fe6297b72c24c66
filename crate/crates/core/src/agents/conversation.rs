//! Runs a whole session as one continuous chat conversation.
//!
//! The textual interface shows exactly what a web participant sees, minus
//! markup and timing: instructions, the quiz, the gate code, each list one
//! letter per message, the probe, the self-report and the catch question.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::prompts::SystemPrompt;
use super::structured::{extract_answer_text, parse_structured_answer};
use crate::paradigm::{grade_catch, grade_response, instruction_quiz, instructions_text, render_probe, SessionPlan};
use crate::store::{ClientMeta, ClientSource, QuizAttempt, Response, SelfReport, SessionRecord};
use crate::{Error, Result};

pub const FORMAT_REMINDER: &str =
    "Please reply only with a JSON object of the form {\"answer\": \"<your answer>\"}.";

const MAX_QUIZ_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Anything that maps a conversation so far to the next assistant reply.
pub trait ChatTransport {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub turn: usize,
    pub role: Role,
    pub content: String,
}

pub trait TranscriptSink {
    fn record(&mut self, entry: &TranscriptEntry) -> Result<()>;
}

impl TranscriptSink for Vec<TranscriptEntry> {
    fn record(&mut self, entry: &TranscriptEntry) -> Result<()> {
        self.push(entry.clone());
        Ok(())
    }
}

/// One JSON object per line, flushed after every entry so an aborted run
/// leaves a usable partial transcript.
pub struct JsonlTranscript {
    path: std::path::PathBuf,
    out: BufWriter<File>,
}

impl JsonlTranscript {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }
}

impl TranscriptSink for JsonlTranscript {
    fn record(&mut self, entry: &TranscriptEntry) -> Result<()> {
        serde_json::to_writer(&mut self.out, entry)?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Debug, Clone)]
pub struct LlmSessionOptions {
    pub prompt: SystemPrompt,
    pub model_name: String,
    pub provider: Option<String>,
    pub endpoint: Option<String>,
    /// Wall clock in milliseconds; replaceable for reproducible tests.
    pub now_ms: fn() -> u64,
}

impl LlmSessionOptions {
    pub fn new(prompt: SystemPrompt, model_name: impl Into<String>) -> Self {
        Self {
            prompt,
            model_name: model_name.into(),
            provider: None,
            endpoint: None,
            now_ms: system_now_ms,
        }
    }

    pub fn participant_type(&self) -> String {
        format!("llm:{}:{}", self.model_name, self.prompt.label())
    }
}

fn system_now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

struct Conversation<'a, T: ?Sized, S: ?Sized> {
    transport: &'a mut T,
    sink: &'a mut S,
    messages: Vec<ChatMessage>,
    now_ms: fn() -> u64,
}

impl<T: ChatTransport + ?Sized, S: TranscriptSink + ?Sized> Conversation<'_, T, S> {
    fn push(&mut self, role: Role, content: String) -> Result<()> {
        self.sink.record(&TranscriptEntry {
            turn: self.messages.len(),
            role,
            content: content.clone(),
        })?;
        self.messages.push(ChatMessage { role, content });
        Ok(())
    }

    /// Sends `text` and waits for a reply; returns it with the latency.
    fn ask(&mut self, text: String) -> Result<(String, u64)> {
        self.push(Role::User, text)?;
        let start = (self.now_ms)();
        let reply = self.transport.complete(&self.messages)?;
        let latency = (self.now_ms)().saturating_sub(start);
        self.push(Role::Assistant, reply.clone())?;
        Ok((reply, latency))
    }

    /// A single-letter answer, reprompting once on unparseable output.
    fn ask_letter(&mut self, text: String) -> Result<(Option<char>, String, u64)> {
        let (reply, lat) = self.ask(text)?;
        if let Ok(a) = parse_structured_answer(&reply) {
            return Ok((Some(a.answer), reply, lat));
        }
        let (retry, lat2) = self.ask(FORMAT_REMINDER.to_string())?;
        let parsed = parse_structured_answer(&retry).ok().map(|a| a.answer);
        Ok((parsed, retry, lat + lat2))
    }
}

/// Drives `plan` through `transport`. Transport failures abort the session;
/// the partial record is returned with `complete = false`.
pub fn run_llm_session<T, S>(
    transport: &mut T,
    plan: &SessionPlan,
    participant_id: Uuid,
    options: &LlmSessionOptions,
    sink: &mut S,
) -> Result<SessionRecord>
where
    T: ChatTransport + ?Sized,
    S: TranscriptSink + ?Sized,
{
    let client = ClientMeta {
        source: ClientSource::Llm,
        user_agent: None,
        endpoint: options.endpoint.clone(),
        provider: options.provider.clone(),
        model: Some(options.model_name.clone()),
        prompt: Some(options.prompt.label().to_string()),
    };
    let mut record = SessionRecord::from_plan(plan, participant_id, options.participant_type(), client);
    record.timestamps.started_ms = (options.now_ms)();
    let mut conv = Conversation {
        transport,
        sink,
        messages: Vec::new(),
        now_ms: options.now_ms,
    };
    match drive(&mut conv, plan, options.prompt.text(), &mut record) {
        Ok(()) => record.complete = true,
        Err(Error::Transport(msg)) => {
            log::warn!("session {participant_id} aborted: {msg}");
            record.complete = false;
        }
        Err(e) => return Err(e),
    }
    record.timestamps.finished_ms = Some((options.now_ms)());
    Ok(record)
}

fn drive<T, S>(
    conv: &mut Conversation<'_, T, S>,
    plan: &SessionPlan,
    system_prompt: Option<String>,
    record: &mut SessionRecord,
) -> Result<()>
where
    T: ChatTransport + ?Sized,
    S: TranscriptSink + ?Sized,
{
    if let Some(p) = system_prompt {
        conv.push(Role::System, p)?;
    }
    let config = &plan.config;
    let instructions = format!(
        "{}\n\nWhenever you are asked a question, reply with a JSON object of the form \
         {{\"answer\": \"<your answer>\"}}.",
        instructions_text(config)
    );

    // Instructions and comprehension quiz; a failed quiz loops back.
    let quiz = instruction_quiz();
    let mut preamble = instructions.clone();
    for attempt in 0..MAX_QUIZ_ATTEMPTS {
        let mut answers = Vec::with_capacity(quiz.len());
        for (i, item) in quiz.iter().enumerate() {
            let mut text = String::new();
            if i == 0 {
                text.push_str(&preamble);
                text.push_str("\n\n");
            }
            text.push_str(&format!("Quiz question {} of {}: {}\n", i + 1, quiz.len(), item.question_text));
            for (j, opt) in item.options.iter().enumerate() {
                text.push_str(&format!("{}) {}\n", (b'A' + j as u8) as char, opt));
            }
            text.push_str("Answer with the letter of the correct option.");
            let (letter, _, _) = conv.ask_letter(text)?;
            let choice = letter
                .map(|c| (c as u8).wrapping_sub(b'A') as usize)
                .filter(|&idx| idx < item.options.len());
            answers.push(choice);
        }
        let passed = answers
            .iter()
            .zip(&quiz)
            .all(|(a, q)| *a == Some(q.correct_index));
        record.quiz_attempts.push(QuizAttempt { answers, passed });
        if passed {
            break;
        }
        if attempt + 1 < MAX_QUIZ_ATTEMPTS {
            preamble = format!(
                "Some of your quiz answers were incorrect. Please read the instructions again.\n\n{instructions}"
            );
        }
    }

    // Gate code screen.
    let (reply, _) = conv.ask(format!(
        "To continue, type the following code: {}",
        plan.gate_code_hex
    ))?;
    let mut entry = extract_answer_text(&reply);
    if !entry.eq_ignore_ascii_case(&plan.gate_code_hex) {
        let (reply, _) = conv.ask(format!(
            "That code was not correct. Please type the code {} to continue.",
            plan.gate_code_hex
        ))?;
        entry = extract_answer_text(&reply);
    }
    record.gate_entry = Some(entry);

    // Practice then main trials.
    let n_practice = plan.trials.iter().filter(|t| t.is_practice).count();
    let n_main = plan.trials.len() - n_practice;
    let mut feedback: Option<String> = None;
    let mut announced_main = false;
    for idx in 0..record.trials.len() {
        let trial = record.trials[idx].trial.clone();
        let mut intro = feedback.take().map(|f| f + "\n\n").unwrap_or_default();
        if trial.is_practice {
            intro.push_str(&format!(
                "Practice trial {} of {n_practice}. The letters will now be shown one at a time.",
                trial.index + 1
            ));
        } else {
            if !announced_main {
                intro.push_str("The practice trials are over. The main trials begin now.\n\n");
                announced_main = true;
            }
            intro.push_str(&format!(
                "Trial {} of {n_main}. The letters will now be shown one at a time.",
                trial.index + 1
            ));
        }
        conv.push(Role::User, intro)?;
        for &c in &trial.letters {
            conv.push(Role::User, c.to_string())?;
        }
        let probe = format!("{} Reply with {{\"answer\": \"<letter>\"}}.", render_probe(&trial));
        let (letter, raw, latency) = conv.ask_letter(probe)?;
        let response = match letter {
            Some(c) => {
                let g = grade_response(&trial, &c.to_string(), &config.alphabet);
                Response {
                    answer: Some(c.to_string()),
                    correct: g.correct,
                    invalid: g.invalid,
                    timed_out: false,
                    latency_ms: Some(latency),
                }
            }
            None => Response {
                answer: Some(raw),
                correct: false,
                invalid: true,
                timed_out: false,
                latency_ms: Some(latency),
            },
        };
        if trial.is_practice {
            feedback = Some(if response.correct {
                "Correct!".to_string()
            } else {
                format!("Incorrect. The correct answer was {}.", trial.correct_answer)
            });
        }
        record.trials[idx].response = Some(response);
    }

    // AI self-report.
    let mut text = feedback.take().map(|f| f + "\n\n").unwrap_or_default();
    text.push_str("All trials are complete. Are you an AI? Answer Y for yes or N for no.");
    let (letter, raw, _) = conv.ask_letter(text)?;
    record.ai_self_report = SelfReport {
        answer: Some(letter.map(|c| c.to_string()).unwrap_or(raw)),
        claims_ai: match letter {
            Some('Y') => Some(true),
            Some('N') => Some(false),
            _ => None,
        },
    };

    // Catch question, skippable.
    let (reply, _) = conv.ask(format!(
        "{}\nYou may skip this question by answering {{\"answer\": \"skip\"}}.",
        plan.catch_question.prompt_text
    ))?;
    let answer = extract_answer_text(&reply);
    let answer = (!answer.is_empty() && !answer.eq_ignore_ascii_case("skip")).then_some(answer);
    record.catch.grade = grade_catch(&plan.catch_question, answer.as_deref());
    record.catch.answer = answer;
    Ok(())
}
