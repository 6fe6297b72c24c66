//! Participant sources: generative simulators and LLM chat endpoints driven
//! through a plain-text rendering of the task.

mod conversation;
mod http;
mod mock;
pub mod prompts;
mod simulate;
mod structured;

pub use conversation::{
    run_llm_session, ChatMessage, ChatTransport, JsonlTranscript, LlmSessionOptions, Role,
    TranscriptEntry, TranscriptSink, FORMAT_REMINDER,
};
pub use http::{EndpointConfig, HttpChatClient};
pub use mock::{mock_reply, MockChat, MockPolicy};
pub use prompts::SystemPrompt;
pub use simulate::{
    derive_seed, participant_uuid, simulate_cohort, simulate_human, simulate_instructed_wm,
    simulate_perfect, HumanGenParams, LatencyModel, SimKind, StyleParams,
};
pub use structured::{extract_answer_text, parse_structured_answer, StructuredAnswer};
