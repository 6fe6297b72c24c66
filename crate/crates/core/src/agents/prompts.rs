//! System prompts for LLM participants.

use serde::{Deserialize, Serialize};

/// Prompt used for LLMs instructed to behave like a human participant.
pub const LLM_HUMAN: &str =
    "You are a human with cognitive limitations participating in a psychology experiment.";

/// Appended to [`LLM_HUMAN`] for LLMs instructed to mimic working memory.
pub const LLM_WM_EXTENSION: &str = "You have strict working memory limitations -- you can only hold a limited number of items in your short-term memory.
When presented with a long list of items without rehearsal opportunities, you will experience memory decay, particularly for items in the middle of the list.
1. You must process the items sequentially as they appear
2. You must forget items based on serial position effects - remembering beginning items (primacy) and recent items (recency) better than middle items
3. You must introduce errors in recall according to these serial position effects.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemPrompt {
    #[serde(rename = "human")]
    LlmHuman,
    #[serde(rename = "wm")]
    LlmWm,
    None,
    Custom(String),
}

impl SystemPrompt {
    pub fn text(&self) -> Option<String> {
        match self {
            SystemPrompt::LlmHuman => Some(LLM_HUMAN.to_string()),
            SystemPrompt::LlmWm => Some(format!("{LLM_HUMAN}\n\n{LLM_WM_EXTENSION}")),
            SystemPrompt::None => None,
            SystemPrompt::Custom(t) => Some(t.clone()),
        }
    }

    /// Short label used inside participant types, e.g. `llm:gpt-5-mini:wm`.
    pub fn label(&self) -> &str {
        match self {
            SystemPrompt::LlmHuman => "human",
            SystemPrompt::LlmWm => "wm",
            SystemPrompt::None => "none",
            SystemPrompt::Custom(_) => "custom",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "human" => Some(SystemPrompt::LlmHuman),
            "wm" => Some(SystemPrompt::LlmWm),
            "none" => Some(SystemPrompt::None),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wm_prompt_extends_human_prompt() {
        let wm = SystemPrompt::LlmWm.text().unwrap();
        assert!(wm.starts_with(LLM_HUMAN));
        assert!(wm.ends_with("according to these serial position effects."));
        assert_eq!(SystemPrompt::None.text(), None);
        for p in ["human", "wm", "none"] {
            assert_eq!(SystemPrompt::from_label(p).unwrap().label(), p);
        }
    }
}
