use serde_json::Value;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuredAnswer {
    pub answer: char,
    pub raw: String,
}

/// Last JSON object in `raw` carrying a string `"answer"` field.
fn json_answer(raw: &str) -> Option<String> {
    let mut found = None;
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            match map.get("answer") {
                Some(Value::String(s)) => found = Some(s.clone()),
                Some(Value::Number(n)) => found = Some(n.to_string()),
                _ => {}
            }
        }
    }
    found
}

/// Extracts a single letter from a model reply.
///
/// A JSON object `{"answer": "<letter>"}` anywhere in the reply wins;
/// otherwise the last standalone one-letter token is used.
pub fn parse_structured_answer(raw: &str) -> Result<StructuredAnswer> {
    let single_letter = |s: &str| {
        let mut cs = s.trim().chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) if c.is_alphabetic() => c.to_uppercase().next(),
            _ => None,
        }
    };
    let letter = match json_answer(raw) {
        Some(a) => single_letter(&a),
        None => raw
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .filter_map(single_letter)
            .next_back(),
    };
    letter
        .map(|answer| StructuredAnswer {
            answer,
            raw: raw.to_string(),
        })
        .ok_or_else(|| Error::Parse(raw.to_string()))
}

/// Free-text answer: the JSON `"answer"` field if present, else the trimmed
/// reply. Used for the gate code and the catch question.
pub fn extract_answer_text(raw: &str) -> String {
    json_answer(raw).unwrap_or_else(|| raw.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_object() {
        assert_eq!(parse_structured_answer(r#"{"answer": "Q"}"#).unwrap().answer, 'Q');
        let reply = "Sure. Here you go:\n```json\n{\"answer\": \"k\"}\n```";
        assert_eq!(parse_structured_answer(reply).unwrap().answer, 'K');
    }

    #[test]
    fn fallback_last_single_letter() {
        assert_eq!(parse_structured_answer("I think it was q").unwrap().answer, 'Q');
        assert_eq!(parse_structured_answer("B, or maybe D.").unwrap().answer, 'D');
    }

    #[test]
    fn unparseable() {
        assert!(matches!(parse_structured_answer("no idea"), Err(Error::Parse(_))));
        assert!(parse_structured_answer(r#"{"answer": "QH"}"#).is_err());
        assert!(parse_structured_answer("").is_err());
    }

    #[test]
    fn text_answers() {
        assert_eq!(extract_answer_text(r#"{"answer": "1A3F"}"#), "1A3F");
        assert_eq!(extract_answer_text(r#"{"answer": 6719}"#), "6719");
        assert_eq!(extract_answer_text("  skip \n"), "skip");
    }
}
