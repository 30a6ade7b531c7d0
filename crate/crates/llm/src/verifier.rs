//! Exact-match answer checking.

use skillr1_core::env::{PortError, Verifier};
use skillr1_core::{Payload, RolloutContent, TaskInstance};

/// Text after the last occurrence of `marker`, or the whole text if the
/// marker never appears.
pub fn extract_answer<'a>(text: &'a str, marker: &str) -> &'a str {
    match text.rfind(marker) {
        Some(i) => &text[i + marker.len()..],
        None => text,
    }
}

/// Case-fold, trim, collapse internal whitespace, strip trailing punctuation.
pub fn normalize_answer(s: &str) -> String {
    let folded = s.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_string()
}

pub fn exact_match(rollout: &str, reference: &str, marker: &str) -> bool {
    normalize_answer(extract_answer(rollout, marker)) == normalize_answer(reference)
}

#[derive(Clone, Debug)]
pub struct ExactMatchVerifier {
    pub marker: String,
}

impl ExactMatchVerifier {
    pub fn new(marker: impl Into<String>) -> Self {
        Self { marker: marker.into() }
    }
}

impl Verifier for ExactMatchVerifier {
    fn verify(&self, instance: &TaskInstance, content: &RolloutContent) -> Result<f64, PortError> {
        let Payload::Text {
            answer: Some(reference),
            ..
        } = &instance.payload
        else {
            return Err(PortError::fatal(format!(
                "instance {} has no reference answer",
                instance.id
            )));
        };
        let RolloutContent::Text(text) = content else {
            return Err(PortError::fatal("exact-match verifier expects text"));
        };
        Ok(if exact_match(text, reference, &self.marker) {
            1.0
        } else {
            0.0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const M: &str = "FINAL ANSWER:";

    #[test]
    fn normalization() {
        assert!(exact_match("Paris ", "paris", M));
        assert!(!exact_match("Paris, France", "Paris", M));
        assert!(exact_match("  New\tYork   City!!", "new york city", M));
        assert_eq!(normalize_answer("42."), "42");
    }

    #[test]
    fn last_marker_wins() {
        let transcript = "Let me think.\nA first guess would be FINAL ANSWER: Lyon, but no.\n\
The capital is on the Seine.\nFINAL ANSWER:  Paris.\n";
        assert_eq!(extract_answer(transcript, M), "  Paris.\n");
        assert!(exact_match(transcript, "Paris", M));
        assert!(!exact_match(transcript, "Lyon", M));
    }

    #[test]
    fn missing_reference_is_an_error() {
        let inst = TaskInstance {
            id: "q".into(),
            payload: Payload::Text {
                task: "?".into(),
                answer: None,
            },
            skill_bank_ref: "b".into(),
        };
        let err = ExactMatchVerifier::new(M)
            .verify(&inst, &RolloutContent::Text("x".into()))
            .unwrap_err();
        assert!(err.message.contains("no reference answer"));
    }
}
