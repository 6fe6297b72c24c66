//! Deterministic stand-ins for a chat endpoint, for offline tests.

use serde::{Deserialize, Serialize};

use super::conversation::{ChatMessage, ChatTransport, Role};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockPolicy {
    /// Answers with the most recent one-letter user message (the last list
    /// item shown), or `A` before any list has been shown.
    EchoLastLetter,
    /// Never produces a parseable answer.
    Malformed,
}

pub fn mock_reply(policy: MockPolicy, messages: &[ChatMessage]) -> String {
    match policy {
        MockPolicy::EchoLastLetter => {
            let letter = messages
                .iter()
                .rev()
                .filter(|m| m.role == Role::User)
                .find_map(|m| {
                    let mut cs = m.content.chars();
                    match (cs.next(), cs.next()) {
                        (Some(c), None) if c.is_ascii_uppercase() => Some(c),
                        _ => None,
                    }
                })
                .unwrap_or('A');
            format!("{{\"answer\": \"{letter}\"}}")
        }
        MockPolicy::Malformed => "No comment.".to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct MockChat {
    pub policy: MockPolicy,
    pub calls: usize,
}

impl MockChat {
    pub fn new(policy: MockPolicy) -> Self {
        Self { policy, calls: 0 }
    }
}

impl ChatTransport for MockChat {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String> {
        self.calls += 1;
        Ok(mock_reply(self.policy, messages))
    }
}
