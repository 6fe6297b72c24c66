use uuid::Uuid;

use wmprobe::agents::prompts::{LLM_HUMAN, LLM_WM_EXTENSION};
use wmprobe::agents::{
    run_llm_session, ChatMessage, ChatTransport, LlmSessionOptions, MockChat, MockPolicy, Role, SystemPrompt,
    TranscriptEntry,
};
use wmprobe::design::rows_from_session;
use wmprobe::paradigm::{SessionPlan, TaskConfig};
use wmprobe::{Error, Result};

fn options(prompt: SystemPrompt) -> LlmSessionOptions {
    let mut o = LlmSessionOptions::new(prompt, "mock-1");
    o.now_ms = || 1_000;
    o
}

fn run(policy: MockPolicy, prompt: SystemPrompt, seed: u64) -> (SessionPlan, wmprobe::store::SessionRecord, Vec<TranscriptEntry>) {
    let plan = SessionPlan::new(seed, &TaskConfig::default()).unwrap();
    let mut chat = MockChat::new(policy);
    let mut transcript = Vec::new();
    let record =
        run_llm_session(&mut chat, &plan, Uuid::from_u128(seed as u128), &options(prompt), &mut transcript).unwrap();
    (plan, record, transcript)
}

#[test]
fn echo_policy_is_correct_exactly_on_last_position_targets() {
    for seed in 0..5 {
        let (plan, record, _) = run(MockPolicy::EchoLastLetter, SystemPrompt::LlmHuman, seed);
        record.validate().unwrap();
        assert!(record.complete);
        let main: Vec<_> = plan.main_trials().collect();
        let expected = main.iter().filter(|t| t.target_position == t.set_size).count() as f64 / main.len() as f64;
        assert_eq!(record.main_accuracy().unwrap(), expected);
        assert_eq!(record.participant_type, "llm:mock-1:human");
    }
}

#[test]
fn malformed_replies_yield_a_complete_all_invalid_record() {
    let (_, record, transcript) = run(MockPolicy::Malformed, SystemPrompt::LlmHuman, 3);
    record.validate().unwrap();
    assert!(record.complete);
    assert!(record.main_trials().all(|t| t.response.as_ref().unwrap().invalid));
    let rows = rows_from_session(&record).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| !r.covariates.y));
    // One format reminder per probe.
    let reminders = transcript.iter().filter(|e| e.content == wmprobe::agents::FORMAT_REMINDER).count();
    assert!(reminders >= 24, "{reminders}");
}

#[test]
fn system_prompts_are_sent_verbatim() {
    let (_, _, t) = run(MockPolicy::EchoLastLetter, SystemPrompt::LlmHuman, 1);
    assert_eq!(t[0].role, Role::System);
    assert_eq!(t[0].content, LLM_HUMAN);

    let (_, _, t) = run(MockPolicy::EchoLastLetter, SystemPrompt::LlmWm, 1);
    assert!(t[0].content.starts_with(LLM_HUMAN));
    assert!(t[0].content.ends_with(LLM_WM_EXTENSION));

    let (_, r, t) = run(MockPolicy::EchoLastLetter, SystemPrompt::None, 1);
    assert_eq!(t[0].role, Role::User);
    assert_eq!(r.participant_type, "llm:mock-1:none");
}

#[test]
fn letters_are_shown_one_per_message() {
    let (plan, _, t) = run(MockPolicy::EchoLastLetter, SystemPrompt::LlmHuman, 9);
    let first = &plan.trials[0];
    let pos = t
        .iter()
        .position(|e| e.content.contains("Practice trial 1 of"))
        .unwrap();
    let shown: Vec<&str> = t[pos + 1..pos + 1 + first.letters.len()].iter().map(|e| e.content.as_str()).collect();
    let expected: Vec<String> = first.letters.iter().map(|c| c.to_string()).collect();
    assert_eq!(shown, expected);
}

struct FailAfter(usize);

impl ChatTransport for FailAfter {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String> {
        if self.0 == 0 {
            return Err(Error::Transport("connection reset".into()));
        }
        self.0 -= 1;
        Ok(wmprobe::agents::mock_reply(MockPolicy::EchoLastLetter, messages))
    }
}

#[test]
fn transport_failure_returns_incomplete_record() {
    let plan = SessionPlan::new(4, &TaskConfig::default()).unwrap();
    let mut sink = Vec::new();
    let record =
        run_llm_session(&mut FailAfter(12), &plan, Uuid::from_u128(4), &options(SystemPrompt::LlmHuman), &mut sink)
            .unwrap();
    assert!(!record.complete);
    record.validate().unwrap();
}
